//! CSV and manifest output.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::certify::CertResult;
use crate::Result;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// One row per test point: `index,label,predicted,pa_lower,radius,abstain`.
/// Abstains print `predicted` as `-1`.
pub fn write_cert_csv(path: &Path, labels: &[usize], results: &[CertResult]) -> Result<()> {
    let header = strings(&["index", "label", "predicted", "pa_lower", "radius", "abstain"]);
    let rows = results.iter().zip(labels).enumerate().map(|(i, (r, l))| {
        vec![
            i.to_string(),
            l.to_string(),
            r.predicted.map_or("-1".to_string(), |p| p.to_string()),
            fmt_f64(r.pa_lower),
            fmt_f64(r.radius),
            u8::from(r.abstained()).to_string(),
        ]
    });
    write_csv(path, &header, rows)
}

/// Wall time per work unit, kept apart from the deterministic results.
pub fn write_timing_csv(path: &Path, key: &str, seconds: &[f64]) -> Result<()> {
    let header = vec![key.to_string(), "wall_time_s".to_string()];
    let rows = seconds.iter().enumerate().map(|(i, s)| vec![i.to_string(), fmt_f64(*s)]);
    write_csv(path, &header, rows)
}

/// Certified accuracy at `r`: fraction of points predicted correctly with
/// radius at least `r`. Abstains count as wrong.
pub fn certified_accuracy(labels: &[usize], results: &[CertResult], r: f64) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let hits = results.iter().zip(labels).filter(|(c, &l)| c.correct_at(l, r)).count();
    hits as f64 / results.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub radius: f64,
    pub certified_accuracy: f64,
    pub count: usize,
}

pub fn curve(labels: &[usize], results: &[CertResult], radii: &[f64]) -> Vec<CurveRow> {
    radii
        .iter()
        .map(|&r| CurveRow {
            radius: r,
            certified_accuracy: certified_accuracy(labels, results, r),
            count: results.iter().zip(labels).filter(|(c, &l)| c.correct_at(l, r)).count(),
        })
        .collect()
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow], total: usize) -> Result<()> {
    let header = strings(&["radius", "certified_accuracy", "certified_count", "total"]);
    let rows = rows.iter().map(|c| {
        vec![fmt_f64(c.radius), fmt_f64(c.certified_accuracy), c.count.to_string(), total.to_string()]
    });
    write_csv(path, &header, rows)
}

/// Written beside every CLI run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub workers: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `v<crate version>`, with a `-g<describe>` suffix when the build sets `EBSMOOTH_GIT_DESCRIBE`.
pub fn version_string() -> String {
    match option_env!("EBSMOOTH_GIT_DESCRIBE") {
        Some(d) if !d.is_empty() => format!("v{}-{d}", env!("CARGO_PKG_VERSION")),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| crate::Error::Io(e.into()))?;
    Ok(std::fs::write(path, text + "\n")?)
}
