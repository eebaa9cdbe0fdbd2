//! Machine-readable result emission: curve CSVs, versioned JSON reports, and
//! per-run manifests that make every invocation replayable.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AmrError, Result};
use crate::estimators::AmrCurve;

/// Bumped whenever the shape of an emitted document changes.
pub const SCHEMA_VERSION: &str = "1";

/// Writes a curve as `d,estimate,se,ci_low,ci_high,n1,n0`, one row per
/// distance. Inference columns are left empty when absent.
pub fn write_curve_csv<W: Write>(mut w: W, curve: &AmrCurve) -> Result<()> {
    let io_err = |source: std::io::Error| AmrError::Io {
        path: "<writer>".into(),
        source,
    };
    writeln!(w, "d,estimate,se,ci_low,ci_high,n1,n0").map_err(io_err)?;
    let opt = |v: &Option<Vec<f64>>, k: usize| match v {
        Some(xs) => format!("{}", xs[k]),
        None => String::new(),
    };
    for k in 0..curve.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            curve.distances[k],
            curve.estimate[k],
            opt(&curve.se, k),
            opt(&curve.ci_low, k),
            opt(&curve.ci_high, k),
            curve.n1[k],
            curve.n0[k],
        )
        .map_err(io_err)?;
    }
    Ok(())
}

pub fn curve_csv_string(curve: &AmrCurve) -> Result<String> {
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, curve)?;
    Ok(String::from_utf8(buf).expect("csv output is ascii"))
}

/// A versioned JSON envelope around any serializable report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema: String,
    pub kind: String,
    pub payload: T,
}

/// Serializes a report under the current schema version.
pub fn json_report<T: Serialize>(kind: &str, payload: &T) -> Result<String> {
    let report = Report {
        schema: format!("amr/v{SCHEMA_VERSION}"),
        kind: kind.to_string(),
        payload,
    };
    serde_json::to_string_pretty(&report)
        .map_err(|e| AmrError::InvalidInput(format!("serialization failed: {e}")))
}

/// Everything needed to replay a run: the resolved configuration, the seed,
/// and the artifacts read and written.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Seconds since the Unix epoch; informational only.
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            schema: format!("amr/v{SCHEMA_VERSION}"),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| AmrError::InvalidInput(format!("serialization failed: {e}")))?;
        std::fs::write(path, text).map_err(|source| AmrError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorMethod;

    fn curve(with_se: bool) -> AmrCurve {
        AmrCurve {
            distances: vec![0.0, 1.0],
            estimate: vec![0.5, -0.25],
            se: with_se.then(|| vec![0.1, 0.2]),
            ci_low: with_se.then(|| vec![0.3, -0.64]),
            ci_high: with_se.then(|| vec![0.7, 0.14]),
            method: EstimatorMethod::Hajek,
            edof_adjusted: false,
            n1: vec![3, 3],
            n0: vec![4, 4],
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let text = curve_csv_string(&curve(true)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "d,estimate,se,ci_low,ci_high,n1,n0");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,0.5,0.1,0.3,0.7,3,4");
    }

    #[test]
    fn csv_leaves_missing_inference_blank() {
        let text = curve_csv_string(&curve(false)).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("0,0.5,,,,3,4"));
    }

    #[test]
    fn json_report_is_versioned_and_round_trips() {
        let text = json_report("curve", &curve(true)).unwrap();
        let back: Report<AmrCurve> = serde_json::from_str(&text).unwrap();
        assert_eq!(back.schema, format!("amr/v{SCHEMA_VERSION}"));
        assert_eq!(back.kind, "curve");
        assert_eq!(back.payload, curve(true));
    }

    #[test]
    fn manifest_round_trips() {
        let mut m = RunManifest::new(
            "estimate",
            Some(42),
            serde_json::json!({"design": "bernoulli:0.5"}),
        );
        m.inputs.push("outcomes.asc".into());
        m.outputs.push("curve.csv".into());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        let back: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back.seed, Some(42));
        assert_eq!(back.command, "estimate");
        assert_eq!(back.inputs, vec!["outcomes.asc"]);
    }
}
