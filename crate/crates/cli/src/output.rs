//! CSV rows, manifest sidecars and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use simloc_core::sim::{CurvePoint, SimConfig};

use crate::config::Preset;

pub const CSV_HEADER: &str = "sweep_param,param_value,algorithm,p_error,trials,seed";

/// Shortest representation of `x` after rounding to 12 significant digits.
pub fn fmt_sig12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn curve_csv(points: &[CurvePoint], seed: u64) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        for (alg, rate) in p.rates() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.sweep.name(),
                fmt_sig12(p.value),
                alg,
                fmt_sig12(rate),
                p.trials,
                seed
            ));
        }
    }
    out
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub sweep_param: String,
    pub param_value: f64,
    pub algorithm: String,
    pub p_error: f64,
    pub trials: u64,
    pub seed: u64,
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(CSV_HEADER) => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(format!("expected 6 fields in `{l}`"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{e} in `{l}`"));
            let int = |s: &str| s.parse::<u64>().map_err(|e| format!("{e} in `{l}`"));
            Ok(CsvRow {
                sweep_param: f[0].to_string(),
                param_value: num(f[1])?,
                algorithm: f[2].to_string(),
                p_error: num(f[3])?,
                trials: int(f[4])?,
                seed: int(f[5])?,
            })
        })
        .collect()
}

/// Everything needed to regenerate an output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub preset: Option<Preset>,
    pub seed: u64,
    pub output: PathBuf,
    pub tool_version: String,
    pub timestamp_unix: u64,
    pub config: SimConfig,
}

impl RunManifest {
    pub fn new(command: &str, preset: Option<Preset>, output: &Path, config: &SimConfig) -> Self {
        let timestamp_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command: command.to_string(),
            preset,
            seed: config.seed,
            output: output.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix,
            config: config.clone(),
        }
    }
}

/// `results.csv` -> `results.csv.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Writes `contents` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes a data file and its manifest; if the second write fails the first is removed.
pub fn write_with_manifest(path: &Path, data: &str, manifest: &RunManifest) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    write_atomic(path, data.as_bytes())?;
    if let Err(e) = write_atomic(&manifest_path(path), json.as_bytes()) {
        let _ = std::fs::remove_file(path);
        return Err(e);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use simloc_core::sim::{Algorithm, SweepParam};

    #[test]
    fn sig12_formatting() {
        assert_eq!(fmt_sig12(0.3112), "0.3112");
        assert_eq!(fmt_sig12(2.5e-5), "0.000025");
        assert_eq!(fmt_sig12(0.0), "0");
        assert_eq!(fmt_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig12(3.9622329811527855e-5), "0.0000396223298115");
    }

    #[test]
    fn csv_round_trip() {
        let p = CurvePoint {
            sweep: SweepParam::N0,
            value: 3.9622329811527855e-5,
            algorithms: Algorithm::IP.to_vec(),
            errors: vec![13, 769, 9],
            trials: 10_000,
        };
        let text = curve_csv(std::slice::from_ref(&p), 42);
        let rows = parse_curve_csv(&text).unwrap();
        assert_eq!(rows.len(), 3);
        for (row, (alg, rate)) in rows.iter().zip(p.rates()) {
            assert_eq!(row.sweep_param, "n0");
            assert_eq!(row.algorithm, alg.name());
            assert_eq!(row.p_error, rate);
            assert_eq!((row.trials, row.seed), (10_000, 42));
            let rel = (row.param_value - p.value).abs() / p.value;
            assert!(rel < 5e-12, "{rel}");
            assert_eq!(fmt_sig12(row.param_value), fmt_sig12(p.value));
        }
    }

    #[test]
    fn manifest_sidecar_name() {
        assert_eq!(manifest_path(Path::new("out/a.csv")), PathBuf::from("out/a.csv.manifest.json"));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/x.csv"), b"z").is_err());
    }
}
