//! CSV and JSON artifact writing. Every float goes out with 17 significant
//! digits and JSON objects have sorted keys, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const SPEC_VERSION: &str = "1";

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rows of a CSV artifact with a fixed header.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_record(&self.header).map_err(|e| CliError::Io(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))
    }
}

/// What a command produced: an optional CSV table, a JSON result and work counters.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub table: Option<Table>,
    pub result: Value,
    pub counters: BTreeMap<String, u64>,
}

impl Artifacts {
    pub fn count(&mut self, key: &str, n: u64) {
        *self.counters.entry(key.to_string()).or_insert(0) += n;
    }
}

/// Sidecar path: the output path with a `.json` extension.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

/// Writes the sidecar. `timings` holds deterministic work counters rather
/// than wall-clock times, which would break byte-identical reruns.
pub fn write_sidecar(
    path: &Path,
    config: &RunConfig,
    command: &str,
    artifacts: &Artifacts,
    error: Option<&CliError>,
) -> Result<(), CliError> {
    let mut doc = json!({
        "command": command,
        "config_echo": config,
        "versions": {"spec": SPEC_VERSION, "ergoflow": env!("CARGO_PKG_VERSION")},
        "timings": artifacts.counters,
        "result": artifacts.result,
    });
    if let Some(e) = error {
        doc["error"] = json!({"kind": e.kind(), "message": e.to_string()});
    }
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt(-2.0), "-2.0000000000000000e0");
        let x = 1.0 / 3.0;
        assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn sidecar_sits_next_to_the_csv() {
        assert_eq!(sidecar_path(Path::new("a/b.csv")), PathBuf::from("a/b.json"));
        assert_eq!(sidecar_path(Path::new("g.json")), PathBuf::from("g.json"));
    }
}
