//! Run manifests and replay.

use crate::config::RunConfig;
use crate::run::Claim;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the config as serialized; any edit to the config in a manifest changes it.
pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Resolved config: parameters after defaults, output directory cleared.
    pub config: RunConfig,
    pub config_hash: String,
    pub workers: usize,
    pub wall_time_s: f64,
    /// Every tolerance-like parameter, by path.
    pub tolerances: serde_json::Map<String, serde_json::Value>,
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
    pub verdicts: Vec<Claim>,
    pub exit_code: u8,
}

/// Numeric parameters whose name mentions a tolerance.
pub fn tolerances(params: &serde_json::Value) -> serde_json::Map<String, serde_json::Value> {
    fn walk(v: &serde_json::Value, path: &str, out: &mut serde_json::Map<String, serde_json::Value>) {
        if let serde_json::Value::Object(m) = v {
            for (k, x) in m {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                if (k.contains("tol") || k.starts_with("max_gap")) && x.is_number() {
                    out.insert(p, x.clone());
                } else {
                    walk(x, &p, out);
                }
            }
        }
    }
    let mut out = serde_json::Map::new();
    walk(params, "", &mut out);
    out
}

pub fn hash_artifacts(dir: &Path, files: &[String]) -> std::io::Result<Vec<Artifact>> {
    files.iter().map(|f| Ok(Artifact { path: f.clone(), sha256: sha256_hex(&std::fs::read(dir.join(f))?) })).collect()
}

/// First cell where two CSV tables differ, as `row R, column C: expected X, got Y`.
pub fn first_csv_difference(expected: &[u8], got: &[u8]) -> Result<Option<String>, csv::Error> {
    let read = |b: &[u8]| -> Result<Vec<csv::StringRecord>, csv::Error> {
        csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(b).records().collect()
    };
    let (a, b) = (read(expected)?, read(got)?);
    for (row, (ra, rb)) in a.iter().zip(&b).enumerate() {
        for col in 0..ra.len().max(rb.len()) {
            let (x, y) = (ra.get(col), rb.get(col));
            if x != y {
                let header = a.first().and_then(|h| h.get(col)).unwrap_or("?");
                return Ok(Some(format!("row {row}, column {col} ({header}): expected {}, got {}", x.unwrap_or("<missing>"), y.unwrap_or("<missing>"))));
            }
        }
    }
    if a.len() != b.len() {
        return Ok(Some(format!("row count: expected {}, got {}", a.len(), b.len())));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn csv_difference_names_the_cell() {
        let a = b"t,sup\n0.5,1.0\n0.6,2.0\n";
        let b = b"t,sup\n0.5,1.0\n0.6,2.5\n";
        let d = first_csv_difference(a, b).unwrap().unwrap();
        assert!(d.contains("row 2, column 1 (sup)") && d.contains("2.5"), "{d}");
        assert!(first_csv_difference(a, a).unwrap().is_none());
        assert!(first_csv_difference(a, b"t,sup\n0.5,1.0\n").unwrap().unwrap().contains("row count"));
    }

    #[test]
    fn tolerance_paths() {
        let v = serde_json::json!({ "sweep": { "tol": 1e-6, "h": 0.05 }, "max_gap": 0.02, "tolerance": 1e-6 });
        let t = tolerances(&v);
        assert_eq!(t.len(), 3);
        assert!(t.contains_key("sweep.tol"));
    }
}
