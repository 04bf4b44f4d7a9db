//! Experiment reports: a JSON document plus a flat CSV with the same
//! numbers. The wall clock lives in a single field so two runs of the
//! same config differ in at most that one value.

use std::path::Path;

use anyhow::{Context, Result};
use levylab::stats::Estimate;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub probe_label: String,
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    /// Free-form status of this row: "ok", "diverged", a verdict, ...
    pub flag: String,
}

impl ReportRow {
    pub fn from_estimate(label: impl Into<String>, est: &Estimate) -> Self {
        ReportRow {
            probe_label: label.into(),
            value: est.value,
            stderr: est.stderr,
            n: est.n,
            flag: if est.diverged { "diverged".into() } else { "ok".into() },
        }
    }

    /// Deterministic quantity with no sampling error attached.
    pub fn exact(label: impl Into<String>, value: f64, flag: impl Into<String>) -> Self {
        ReportRow {
            probe_label: label.into(),
            value,
            stderr: 0.0,
            n: 0,
            flag: flag.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub library_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<String>,
    pub z_scores: Vec<f64>,
    pub samples_total: u64,
    /// Present when the experiment failed at runtime; the partial report
    /// is still written.
    pub error: Option<String>,
    /// The only field that varies between identical runs.
    pub elapsed_seconds: f64,
}

impl ExperimentReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["experiment", "probe_label", "value", "stderr", "n", "flag"])?;
        // The same float formatter as the JSON serializer, so the two
        // files carry byte-identical numbers.
        let num = |v: f64| serde_json::to_string(&v).unwrap_or_else(|_| "null".into());
        for row in &self.rows {
            w.write_record([
                self.config.kind.as_str(),
                row.probe_label.as_str(),
                &num(row.value),
                &num(row.stderr),
                &row.n.to_string(),
                row.flag.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
