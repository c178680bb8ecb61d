//! Run manifests written next to every output.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

/// Version tags of the file formats this build writes.
pub const GRID_SCHEMA: &str = "grid-v1";
pub const CURVE_SCHEMA: &str = "curve-v1";
pub const FITTED_SCHEMA: &str = "fitted-curve-v1";
pub const SHAPE_SCHEMA: &str = "shape-v1";
pub const REPORT_SCHEMA: &str = "validity-report-v1";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    /// Full argument vector; re-running it reproduces the outputs.
    pub argv: Vec<String>,
    pub parameters: Value,
    /// Values chosen during the run (selected bandwidth, cut-offs, ...).
    pub derived: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub schema: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, parameters: Value, seed: u64, threads: usize) -> Self {
        let started = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or(Duration::ZERO);
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            argv: std::env::args().collect(),
            parameters,
            derived: Value::Object(Default::default()),
            inputs: Vec::new(),
            outputs: Vec::new(),
            schema: "",
            seed,
            threads,
            started_unix: started.as_secs_f64(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn derive(&mut self, key: &str, value: impl Serialize) {
        if let Value::Object(map) = &mut self.derived {
            map.insert(
                key.to_string(),
                serde_json::to_value(value).unwrap_or(Value::Null),
            );
        }
    }

    pub fn finish(&mut self) {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or(Duration::ZERO)
            .as_secs_f64();
        self.wall_clock_seconds = (now - self.started_unix).max(0.0);
    }
}

/// `out.csv` -> `out.csv.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    sidecar(output, "manifest.json")
}

pub fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(
            manifest_path(Path::new("dir/out.csv")),
            PathBuf::from("dir/out.csv.manifest.json")
        );
        assert_eq!(sidecar(Path::new("g.txt"), "meta"), PathBuf::from("g.txt.meta"));
    }

    #[test]
    fn derived_values_accumulate() {
        let mut m = RunManifest::new("scan", Value::Null, 7, 1);
        m.derive("bandwidth", 0.5);
        m.finish();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["derived"]["bandwidth"], 0.5);
        assert_eq!(v["seed"], 7);
        assert!(v["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    }
}
