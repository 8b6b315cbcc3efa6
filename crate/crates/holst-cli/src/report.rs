//! Check rows and their JSON/CSV serialisation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// One check: a measured value against optional bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    /// The mathematical statement checked, or `plumbing`.
    pub anchor: String,
    /// SHA-256 of the config, suite and row index that produced the inputs.
    pub inputs_digest: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
    pub runtime_ms: f64,
}

impl Row {
    pub fn new(id: impl Into<String>, anchor: impl Into<String>, value: f64, lower: Option<f64>, upper: Option<f64>) -> Row {
        let pass = value.is_finite() && lower.map_or(true, |l| value >= l) && upper.map_or(true, |u| value <= u);
        Row { id: id.into(), anchor: anchor.into(), inputs_digest: String::new(), value, lower, upper, pass, runtime_ms: 0.0 }
    }

    pub fn at_most(id: impl Into<String>, anchor: impl Into<String>, value: f64, tol: f64) -> Row {
        Row::new(id, anchor, value, None, Some(tol))
    }

    pub fn at_least(id: impl Into<String>, anchor: impl Into<String>, value: f64, tol: f64) -> Row {
        Row::new(id, anchor, value, Some(tol), None)
    }

    pub fn equals(id: impl Into<String>, anchor: impl Into<String>, value: f64, target: f64) -> Row {
        Row::new(id, anchor, value, Some(target), Some(target))
    }

    /// A value reported without a bound; always passes.
    pub fn info(id: impl Into<String>, anchor: impl Into<String>, value: f64) -> Row {
        let mut r = Row::new(id, anchor, value, None, None);
        r.pass = true;
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn current(threads: usize) -> Self {
        Environment {
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub environment: Environment,
    pub rows: Vec<Row>,
    /// Set when a suite aborted; the rows before it are kept.
    pub error: Option<String>,
}

impl ConstraintReport {
    pub fn all_pass(&self) -> bool {
        self.error.is_none() && self.rows.iter().all(|r| r.pass)
    }
}

pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

const CSV_HEADER: [&str; 8] = ["id", "anchor", "inputs_digest", "value", "lower", "upper", "pass", "runtime_ms"];

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

pub fn to_csv(report: &ConstraintReport) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Necessary).from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(|e| CliError::Io(e.to_string()))?;
    for r in &report.rows {
        w.write_record([
            r.id.clone(),
            r.anchor.clone(),
            r.inputs_digest.clone(),
            format!("{:e}", r.value),
            opt(r.lower),
            opt(r.upper),
            r.pass.to_string(),
            format!("{:.3}", r.runtime_ms),
        ])
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

pub fn render(report: &ConstraintReport, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string())),
        Format::Csv => to_csv(report),
    }
}

pub fn write_report(report: &ConstraintReport, path: &Path, format: Format) -> Result<(), CliError> {
    let text = render(report, format)?;
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
