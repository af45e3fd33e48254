//! Run manifests. The manifest hash covers the tool version, the source
//! hash, the subcommand, the seed and the fully resolved parameters. The
//! output directory and the worker count are deliberately left out: neither
//! changes any result.

use serde::Serialize;
use serde_json::Value;

use crate::error::LabResult;
use crate::output::{sha256_hex, to_canonical_value, OutputSet};

pub const TOOL: &str = "lorenzlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SOURCE_HASH: &str = env!("LORENZLAB_SOURCE_HASH");

#[derive(Debug, Clone, Serialize)]
pub struct ManifestHeader {
    pub tool: &'static str,
    pub version: &'static str,
    pub source_hash: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub config: Value,
}

impl ManifestHeader {
    pub fn new<T: Serialize>(subcommand: &str, seed: u64, config: &T) -> LabResult<Self> {
        Ok(Self {
            tool: TOOL,
            version: VERSION,
            source_hash: SOURCE_HASH,
            subcommand: subcommand.to_string(),
            seed,
            config: to_canonical_value(config)?,
        })
    }

    pub fn hash(&self) -> String {
        let v = to_canonical_value(self).expect("manifest header serializes");
        sha256_hex(serde_json::to_string(&v).expect("json").as_bytes())
    }
}

#[derive(Serialize)]
struct OutputEntry<'a> {
    file: &'a str,
    sha256: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    header: &'a ManifestHeader,
    manifest_hash: String,
    outputs: Vec<OutputEntry<'a>>,
}

pub fn manifest_file_name(subcommand: &str) -> String {
    format!("{subcommand}_manifest.json")
}

/// Writes `<subcommand>_manifest.json` listing every file of the run.
pub fn write_manifest(header: &ManifestHeader, out: &OutputSet) -> LabResult<()> {
    let m = Manifest {
        header,
        manifest_hash: out.manifest_hash().to_string(),
        outputs: out.files().iter().map(|(f, h)| OutputEntry { file: f, sha256: h }).collect(),
    };
    let v = to_canonical_value(&m)?;
    let mut body = serde_json::to_string_pretty(&v).expect("json");
    body.push('\n');
    let path = out.dir().join(manifest_file_name(&header.subcommand));
    std::fs::write(&path, body)?;
    Ok(())
}
