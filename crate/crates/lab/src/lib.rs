//! Experiment driver for `lorenzlab-core`: TOML configuration, deterministic
//! parallel Monte Carlo, CSV/JSON outputs and run manifests.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod observables;
pub mod output;
pub mod par;

use std::path::PathBuf;

use rayon::ThreadPool;
use serde::Serialize;

pub use config::ExperimentConfig;
pub use error::{LabError, LabResult};

use manifest::{manifest_file_name, write_manifest, ManifestHeader};
use output::{Cell, OutputSet};

pub const SUBCOMMANDS: &[&str] = &[
    "simulate",
    "spectrum",
    "lyapunov",
    "measure",
    "dimension",
    "hitting",
    "recurrence",
    "loglaw",
    "correlations",
    "deviations",
    "escape",
    "lapcheck",
    "diagnose-nue",
    "sensitivity",
    "entropy",
];

/// Command-line values that take precedence over `[run]`.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest_hash: String,
    pub out_dir: PathBuf,
    /// Data files, without the manifest itself.
    pub files: Vec<String>,
    pub manifest: String,
}

/// State of one subcommand run. A command resolves its parameters, calls
/// [`Env::begin`] (which fixes the manifest hash) and then writes files.
pub struct Env {
    pub subcommand: &'static str,
    pub seed: u64,
    pub pool: ThreadPool,
    out_dir: PathBuf,
    header: Option<ManifestHeader>,
    out: Option<OutputSet>,
}

impl Env {
    pub fn begin<T: Serialize>(&mut self, resolved: &T) -> LabResult<()> {
        let header = ManifestHeader::new(self.subcommand, self.seed, resolved)?;
        self.out = Some(OutputSet::new(&self.out_dir, header.hash(), self.seed)?);
        self.header = Some(header);
        Ok(())
    }

    /// Hash of the resolved parameters alone (no seed, no code version).
    pub fn params_hash(&self) -> String {
        let h = self.header.as_ref().expect("Env::begin must run first");
        output::sha256_hex(serde_json::to_string(&h.config).expect("json").as_bytes())
    }

    fn out(&mut self) -> &mut OutputSet {
        self.out.as_mut().expect("Env::begin must run before writing outputs")
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> LabResult<()>
    where
        I: IntoIterator<Item = Vec<Cell>>,
    {
        let file = format!("{}_{name}.csv", self.subcommand);
        self.out().csv(&file, header, rows)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> LabResult<()> {
        let file = format!("{}_{name}.json", self.subcommand);
        self.out().json(&file, report)
    }

    fn finish(self) -> LabResult<RunSummary> {
        let (header, out) = match (self.header, self.out) {
            (Some(h), Some(o)) => (h, o),
            _ => return Err(LabError::Precondition("subcommand produced no outputs".into())),
        };
        write_manifest(&header, &out)?;
        Ok(RunSummary {
            manifest_hash: out.manifest_hash().to_string(),
            out_dir: out.dir().to_path_buf(),
            files: out.files().iter().map(|(f, _)| f.clone()).collect(),
            manifest: manifest_file_name(&header.subcommand),
        })
    }
}

/// Runs one subcommand and writes its outputs plus the manifest.
pub fn run(subcommand: &str, cfg: &ExperimentConfig, ov: &Overrides) -> LabResult<RunSummary> {
    let name = SUBCOMMANDS
        .iter()
        .copied()
        .find(|s| *s == subcommand)
        .ok_or_else(|| LabError::Config(format!("unknown subcommand {subcommand:?}")))?;
    let seed = ov.seed.unwrap_or(cfg.run.seed);
    let out_dir = ov.out.clone().or_else(|| cfg.run.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let workers = ov.workers.or(cfg.run.workers).unwrap_or_else(par::default_workers);
    if workers == 0 {
        return Err(LabError::Config("workers must be >= 1".into()));
    }
    let mut env = Env { subcommand: name, seed, pool: par::pool(workers)?, out_dir, header: None, out: None };
    commands::dispatch(cfg, &mut env)?;
    env.finish()
}

#[derive(Debug, Clone)]
pub struct ValidateReport {
    pub text: String,
    pub all_pass: bool,
    /// Names of the failing invariants.
    pub failures: Vec<String>,
}

/// Derived quantities and every model invariant with pass/fail. Uses the
/// `[model]` block or the defaults; adds the equilibrium spectrum when an
/// `[ode]` block is present.
pub fn validate(cfg: &ExperimentConfig) -> ValidateReport {
    use std::fmt::Write as _;
    let mc = cfg.model.unwrap_or_default();
    let mut text = String::new();
    let mut failures = Vec::new();
    let (l1, l2, l3) = (mc.lambda1, mc.lambda2, mc.lambda3);
    let _ = writeln!(
        text,
        "model: lambda = ({l1}, {l2}, {l3}), a_cusp = {}, B = {}, D = {}, r0 = {}",
        mc.a_cusp, mc.b_contract, mc.d_offset, mc.r0
    );
    let (alpha, beta) = (-l3 / l1, -l2 / l1);
    let _ = writeln!(
        text,
        "derived: alpha = {alpha}, beta = {beta}, contraction B (1/2)^beta = {}",
        mc.b_contract * 0.5f64.powf(beta)
    );
    for c in mc.check() {
        let _ = writeln!(text, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        if !c.pass {
            failures.push(c.name.to_string());
        }
    }
    if let Some(p) = cfg.ode {
        match lorenzlab_core::ode::equilibrium_spectrum(&p) {
            Ok(s) => {
                let _ = writeln!(
                    text,
                    "{} ode_equilibrium_ordering: ({}, {}, {}) for (a, r, b) = ({}, {}, {})",
                    if s.lorenz_like { "PASS" } else { "FAIL" },
                    s.lambda1,
                    s.lambda2,
                    s.lambda3,
                    p.a,
                    p.r,
                    p.b
                );
                if !s.lorenz_like {
                    failures.push("ode_equilibrium_ordering".into());
                }
            }
            Err(e) => {
                let _ = writeln!(text, "FAIL ode_equilibrium_ordering: {e}");
                failures.push("ode_equilibrium_ordering".into());
            }
        }
    }
    ValidateReport { all_pass: failures.is_empty(), text, failures }
}
