//! Machine-readable reports and tabular/plot artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentKind, Resolved, Tolerances};
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Bound {
    AtMost {
        limit: f64,
    },
    AtLeast {
        limit: f64,
    },
    Within {
        lo: f64,
        hi: f64,
    },
    /// A boolean condition; `value` is 1 when it holds.
    Holds,
}

impl Bound {
    fn admits(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost { limit } => v <= limit,
            Bound::AtLeast { limit } => v >= limit,
            Bound::Within { lo, hi } => (lo..=hi).contains(&v),
            Bound::Holds => v == 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// Not evaluated: too little data to resolve the tolerance, or not
    /// applicable to this configuration.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: &str, value: f64, bound: Bound) -> Self {
        let status = if bound.admits(value) { Status::Pass } else { Status::Fail };
        Self { name: name.into(), value, bound, status, note: None }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Bound::Holds)
    }

    pub fn skipped(name: &str, value: f64, bound: Bound, why: &str) -> Self {
        Self { name: name.into(), value, bound, status: Status::Skipped, note: Some(why.into()) }
    }

    /// Skip when the estimator's own noise (`floor`) exceeds the tolerance.
    pub fn resolved(name: &str, value: f64, limit: f64, floor: f64) -> Self {
        let bound = Bound::AtMost { limit };
        if floor > limit {
            Self::skipped(name, value, bound, &format!("noise floor {floor:.3e} exceeds tolerance"))
        } else {
            Self::new(name, value, bound)
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// The configuration exactly as run, tolerances included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    #[serde(flatten)]
    pub resolved: Resolved,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub crate_version: String,
    pub config: ConfigEcho,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub counters: BTreeMap<String, u64>,
}

impl Report {
    pub fn new(
        res: &Resolved,
        summary: serde_json::Value,
        checks: Vec<Check>,
        counters: BTreeMap<String, u64>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: res.kind,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config: ConfigEcho { resolved: res.clone(), tolerances: res.tolerances },
            pass: checks.iter().all(Check::passed),
            summary,
            checks,
            counters,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Writes files into one output directory and remembers what it wrote.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_vec_pretty(value)?;
        body.push(b'\n');
        self.put(name, &body)
    }

    /// CSV with a header row; numbers use Rust's shortest round-trip form.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let body = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        self.put(name, &body)
    }

    pub fn svg(&mut self, name: &str, body: &str) -> Result<()> {
        self.put(name, body.as_bytes())
    }
}

/// Shortest round-trip decimal.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_skips() {
        assert_eq!(Check::new("a", 0.1, Bound::AtMost { limit: 0.2 }).status, Status::Pass);
        assert_eq!(Check::new("a", 0.3, Bound::AtMost { limit: 0.2 }).status, Status::Fail);
        assert_eq!(Check::new("a", 1.0, Bound::Within { lo: 0.9, hi: 1.1 }).status, Status::Pass);
        assert_eq!(Check::new("a", f64::NAN, Bound::AtLeast { limit: 0.0 }).status, Status::Fail);
        assert_eq!(Check::holds("h", false).status, Status::Fail);
        let s = Check::resolved("ks", 0.5, 0.03, 0.1);
        assert_eq!(s.status, Status::Skipped);
        assert!(s.passed());
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456789.0, -2.5e-7] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path()).unwrap();
        a.csv("t.csv", &["n", "x"], vec![vec!["1".into(), num(0.5)], vec!["2".into(), num(0.25)]]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "n,x\n1,0.5\n2,0.25\n");
    }
}
