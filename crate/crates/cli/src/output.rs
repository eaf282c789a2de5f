//! CSV tables, float formatting and run manifests.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fracinit::simulate::{CdfGrid, EmpiricalCdf};

use crate::{CliError, CliResult};

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(field: Option<&str>, what: &str, path: &Path) -> CliResult<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| CliError::Usage(format!("{}: bad or missing {what}", path.display())))
}

/// Read a cdf.csv written by `simulate`, keyed by checkpoint.
pub fn read_cdfs(path: &Path) -> CliResult<BTreeMap<usize, EmpiricalCdf>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut raw: BTreeMap<usize, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let cp: usize = parse(rec.get(0), "checkpoint", path)?;
        let n: usize = parse(rec.get(1), "n", path)?;
        let x: f64 = parse(rec.get(2), "x", path)?;
        let f: f64 = parse(rec.get(3), "cdf", path)?;
        let e = raw.entry(cp).or_insert_with(|| (n, Vec::new(), Vec::new()));
        e.1.push(x);
        e.2.push(f);
    }
    let mut out = BTreeMap::new();
    for (cp, (n, xs, fs)) in raw {
        let grid = CdfGrid::new(xs[0], xs[xs.len() - 1], xs.len())?;
        out.insert(cp, EmpiricalCdf { grid, values: fs, n });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

/// Record of one run; feeding it back through `--from-manifest` reproduces
/// the outputs byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub wall_clock_seconds: f64,
    pub finished_unix_seconds: u64,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new<T: Serialize>(
        command: &str,
        seed: u64,
        config: &T,
        elapsed: Duration,
        dir: &Path,
        files: &[String],
    ) -> CliResult<Self> {
        let outputs = files
            .iter()
            .map(|f| {
                Ok(OutputDigest {
                    file: f.clone(),
                    sha256: sha256_file(&dir.join(f))?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?,
            wall_clock_seconds: elapsed.as_secs_f64(),
            finished_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: not a manifest: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::NEG_INFINITY] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert!(fmt_f64(0.1).starts_with("1.0000000000000001e-1"));
    }
}
