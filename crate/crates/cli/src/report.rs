//! Report assembly and CSV/JSON emission.
//!
//! The JSON and CSV encodings of a run share one flat field view, so every
//! field they have in common carries the same value by construction.

use anyhow::Context;
use bitprune::reference::AccuracyReport;
use bitprune::sim::{SimMetrics, StageMetrics};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub mode: String,
    pub metrics: SimMetrics,
    pub accuracy: AccuracyReport,
}

impl RunReport {
    /// Flat numeric view; shared by the CSV writer and the agreement tests.
    pub fn flat_fields(&self) -> Vec<(String, f64)> {
        let mut fields: Vec<(String, f64)> = vec![("seed".to_string(), self.seed as f64)];
        fields.extend(
            self.metrics
                .flat_fields()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v)),
        );
        fields.push(("max_abs_error".to_string(), self.accuracy.max_abs_error));
        fields.push(("retained_fraction".to_string(), self.accuracy.retained_fraction));
        fields.push(("pruned_weight_max".to_string(), self.accuracy.pruned_weight_max));
        fields
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> anyhow::Result<String> {
        let fields = self.flat_fields();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(fields.iter().map(|(k, _)| k.as_str()))?;
        w.write_record(fields.iter().map(|(_, v)| format_num(*v)))?;
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

/// One sweep grid point, in the column order of the emitted CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub retained_fraction: f64,
    pub cycles: u64,
    pub bits_fetched: u64,
    pub energy_pj: f64,
    pub max_abs_error: f64,
    pub pruned_weight_max: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "alpha",
        "retained_fraction",
        "cycles",
        "bits_fetched",
        "energy_pj",
        "max_abs_error",
        "pruned_weight_max",
    ])?;
    for r in rows {
        w.write_record([
            format_num(r.alpha),
            format_num(r.retained_fraction),
            r.cycles.to_string(),
            r.bits_fetched.to_string(),
            format_num(r.energy_pj),
            format_num(r.max_abs_error),
            format_num(r.pruned_weight_max),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Ablation table: cumulative stages with exact percentage deltas, where
/// `cycles_delta_pct = 100 * (prev - cur) / prev` against the previous stage.
pub fn ablate_csv(stages: &[StageMetrics]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stage", "cycles", "cycles_delta_pct", "bits_fetched", "energy_pj", "energy_delta_pct"])?;
    let mut prev: Option<&SimMetrics> = None;
    for s in stages {
        let (cd, ed) = match prev {
            None => (0.0, 0.0),
            Some(p) => (
                100.0 * (p.total_cycles as f64 - s.metrics.total_cycles as f64) / p.total_cycles as f64,
                100.0 * (p.energy_pj - s.metrics.energy_pj) / p.energy_pj,
            ),
        };
        w.write_record([
            s.stage.clone(),
            s.metrics.total_cycles.to_string(),
            format_num(cd),
            s.metrics.bits_fetched.to_string(),
            format_num(s.metrics.energy_pj),
            format_num(ed),
        ])?;
        prev = Some(&s.metrics);
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Deterministic float formatting for CSV cells.
pub fn format_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}
