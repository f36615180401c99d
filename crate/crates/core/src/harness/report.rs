use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::config::{ExperimentConfig, Format};
use crate::error::{Error, Result};
use crate::state_evolution::PrecisionWarning;

pub const CSV_HEADER: &str = "t,observable,empirical_mean,empirical_stderr,se_prediction,abs_err,z_score";

/// One `(t, observable)` comparison. Absent values (no empirical run, no
/// prediction, zero standard error) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: usize,
    pub observable: String,
    #[serde(serialize_with = "sig17")]
    pub empirical_mean: Option<f64>,
    #[serde(serialize_with = "sig17")]
    pub empirical_stderr: Option<f64>,
    #[serde(serialize_with = "sig17")]
    pub se_prediction: Option<f64>,
    #[serde(serialize_with = "sig17")]
    pub abs_err: Option<f64>,
    #[serde(serialize_with = "sig17")]
    pub z_score: Option<f64>,
}

impl ReportRow {
    /// Fills `abs_err` and `z_score = abs_err / stderr` (when `stderr > 0`).
    pub fn new(
        t: usize,
        observable: impl Into<String>,
        mean: Option<f64>,
        stderr: Option<f64>,
        prediction: Option<f64>,
    ) -> Self {
        let abs_err = match (mean, prediction) {
            (Some(m), Some(p)) => Some((m - p).abs()),
            _ => None,
        };
        let z_score = match (abs_err, stderr) {
            (Some(e), Some(s)) if s > 0.0 => Some(e / s),
            _ => None,
        };
        Self {
            t,
            observable: observable.into(),
            empirical_mean: mean,
            empirical_stderr: stderr,
            se_prediction: prediction,
            abs_err,
            z_score,
        }
    }
}

/// Formats with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn sig17<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => {
            let raw = RawValue::from_string(format_float(*x)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        }
        _ => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub fixed_point: f64,
    pub quadrature_precision: f64,
    /// `|z|` bound used by the finite-size checks.
    pub z_threshold: f64,
    /// Relative-error floor used by the finite-size checks.
    pub relative_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergedReplicate {
    pub replicate: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFlag {
    pub t: usize,
    pub observable: String,
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeSummary {
    /// `tau_t^2` from the first index of the recursion on.
    pub tau2: Vec<f64>,
    pub first_index: usize,
    pub fixed_point: Option<usize>,
    pub policy: String,
    pub warnings: Vec<PrecisionWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub mode: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub tolerances: Tolerances,
    /// Fingerprint of each replicate's matrix stream key.
    pub replicate_seeds: Vec<u64>,
    pub replicates_used: usize,
    pub diverged: Vec<DivergedReplicate>,
    pub state_evolution: Option<SeSummary>,
    pub row_flags: Vec<RowFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

fn csv_field(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format_float(x),
        _ => String::new(),
    }
}

/// CSV body (header plus one line per row) or pretty JSON with metadata.
pub fn emit_report(report: &EnsembleReport, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => Ok(emit_csv(&report.rows).into_bytes()),
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

pub fn emit_csv(rows: &[ReportRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let fields = [
            r.t.to_string(),
            r.observable.clone(),
            csv_field(r.empirical_mean),
            csv_field(r.empirical_stderr),
            csv_field(r.se_prediction),
            csv_field(r.abs_err),
            csv_field(r.z_score),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_report(report: &EnsembleReport, format: Format, path: &Path) -> Result<()> {
    let bytes = emit_report(report, format)?;
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn parse_json_report(bytes: &[u8]) -> Result<EnsembleReport> {
    Ok(serde_json::from_slice(bytes)?)
}
