//! Output files. Every number is written with 17 significant digits and
//! every file carries the manifest hash: CSV files in a leading
//! `# manifest_hash=...` comment, JSON files as a top-level key.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use crate::error::{LabError, LabResult};

/// 17 significant digits in scientific notation; round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    B(bool),
    S(String),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::F(v) => out.push_str(&fmt_f64(*v)),
            Cell::I(v) => write!(out, "{v}").unwrap(),
            Cell::U(v) => write!(out, "{v}").unwrap(),
            Cell::B(v) => out.push(if *v { '1' } else { '0' }),
            Cell::S(s) => out.push_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

/// Rewrites every non-integer number at 17 significant digits. Non-finite
/// floats have already become `null` in `serde_json`.
pub fn canonical_json(v: Value) -> Value {
    match v {
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                Value::Number(n)
            } else {
                let f = n.as_f64().expect("finite json number");
                let s = fmt_f64(f);
                Value::Number(serde_json::from_str::<Number>(&s).expect("valid number literal"))
            }
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonical_json).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, canonical_json(v))).collect()),
        other => other,
    }
}

pub fn to_canonical_value<T: Serialize>(t: &T) -> LabResult<Value> {
    let v = serde_json::to_value(t).map_err(|e| LabError::Config(format!("serialize: {e}")))?;
    Ok(canonical_json(v))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the files of one run; `finish` records them in the manifest.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    manifest_hash: String,
    seed: u64,
    written: Vec<(String, String)>,
}

impl OutputSet {
    pub fn new(dir: &Path, manifest_hash: String, seed: u64) -> LabResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| LabError::Precondition(format!("output directory {} not writable: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), manifest_hash, seed, written: Vec::new() })
    }

    pub fn manifest_hash(&self) -> &str {
        &self.manifest_hash
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[(String, String)] {
        &self.written
    }

    fn write(&mut self, name: &str, body: String) -> LabResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, body.as_bytes())
            .map_err(|e| LabError::Precondition(format!("cannot write {}: {e}", path.display())))?;
        self.written.push((name.to_string(), sha256_hex(body.as_bytes())));
        Ok(())
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> LabResult<()>
    where
        I: IntoIterator<Item = Vec<Cell>>,
    {
        let mut body = format!("# manifest_hash={}\n# seed={}\n", self.manifest_hash, self.seed);
        body.push_str(&header.join(","));
        body.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    body.push(',');
                }
                c.render(&mut body);
            }
            body.push('\n');
        }
        self.write(name, body)
    }

    /// Writes a JSON object with `manifest_hash` and `seed` merged in at the top level.
    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> LabResult<()> {
        let mut map = match to_canonical_value(report)? {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("report".into(), other);
                m
            }
        };
        map.insert("manifest_hash".into(), Value::String(self.manifest_hash.clone()));
        map.insert("seed".into(), Value::from(self.seed));
        let mut body = serde_json::to_string_pretty(&Value::Object(map)).expect("json");
        body.push('\n');
        self.write(name, body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_at_17_digits() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 11.827723451163456, f64::MIN_POSITIVE, 1e300] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mant: String = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect();
            assert_eq!(mant.len(), 17, "{s}");
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn json_numbers_are_canonical() {
        let v = canonical_json(serde_json::json!({"a": 0.1, "n": 3, "l": [2.0, -1], "x": null}));
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"a":1.0000000000000001e-1,"l":[2.0000000000000000e+0,-1],"n":3,"x":null}"#);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), 0.1);
    }
}
