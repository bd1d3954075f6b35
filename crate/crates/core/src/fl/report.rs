//! Metrics CSV and JSON run summary.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SCHEMA_VERSION};
use super::train::{RoundMetrics, TrainingReport};

const CSV_HEADER: [&str; 9] = [
    "epoch",
    "accuracy",
    "flagged_correctness",
    "flagged_robustness",
    "flagged_magnitude",
    "agg_norm",
    "phase_ms_step1",
    "phase_ms_step2",
    "phase_ms_step3",
];

/// One row per epoch.
pub fn metrics_csv(rounds: &[RoundMetrics]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rounds {
        w.write_record([
            r.epoch.to_string(),
            format!("{:.6}", r.accuracy),
            r.flagged_correctness.len().to_string(),
            r.flagged_robustness.len().to_string(),
            r.flagged_magnitude.len().to_string(),
            format!("{:.9}", r.agg_norm),
            r.phase_ms[0].to_string(),
            r.phase_ms[1].to_string(),
            r.phase_ms[2].to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub flagged_correctness: usize,
    pub flagged_robustness: usize,
    pub flagged_magnitude: usize,
    pub skipped_rounds: usize,
    pub aggregations: usize,
    pub ledger_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub final_accuracy: f64,
    pub parameters: usize,
    pub byzantine: Vec<u32>,
    pub totals: Totals,
    pub rounds: Vec<RoundMetrics>,
}

pub fn summary_json(config: &ExperimentConfig, report: &TrainingReport) -> String {
    let sum = |f: fn(&RoundMetrics) -> usize| report.rounds.iter().map(f).sum();
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        final_accuracy: report.final_accuracy,
        parameters: report.parameters,
        byzantine: report.byzantine.clone(),
        totals: Totals {
            flagged_correctness: sum(|r| r.flagged_correctness.len()),
            flagged_robustness: sum(|r| r.flagged_robustness.len()),
            flagged_magnitude: sum(|r| r.flagged_magnitude.len()),
            skipped_rounds: sum(|r| r.skipped as usize),
            aggregations: report.aggregations,
            ledger_violations: report.ledger_violations,
        },
        rounds: report.rounds.clone(),
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes")
}
