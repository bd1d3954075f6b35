use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use secagg_robust::fl::{
    metrics_csv, run_training, summary_json, ExperimentConfig, RunOptions, TrainingError, TrainingReport,
    TranscriptRecord, SCHEMA_VERSION,
};
use secagg_robust::secagg::encode_log;

use crate::exit;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LOG_FILE: &str = "transcript.bin";
pub const INDEX_FILE: &str = "transcript.json";

/// Where each aggregation's messages sit in the flat log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    #[serde(flatten)]
    pub record: TranscriptRecord,
    pub first_message: usize,
    pub message_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptIndex {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub messages: usize,
    pub bytes: usize,
    pub final_accuracy: f64,
    pub records: Vec<IndexEntry>,
}

impl TranscriptIndex {
    pub fn build(config: &ExperimentConfig, report: &TrainingReport, bytes: usize) -> Self {
        let mut first = 0;
        let records = report
            .transcripts
            .iter()
            .map(|r| {
                let entry = IndexEntry {
                    record: r.clone(),
                    first_message: first,
                    message_count: r.messages.len(),
                };
                first += r.messages.len();
                entry
            })
            .collect();
        TranscriptIndex {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            messages: first,
            bytes,
            final_accuracy: report.final_accuracy,
            records,
        }
    }
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut config = ExperimentConfig::from_toml(&text).map_err(|e| format!("config error: {e}"))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

/// Exit code for a failed run.
pub fn training_exit_code(e: &TrainingError) -> u8 {
    match e {
        TrainingError::Config(_) | TrainingError::Data(_) => exit::USAGE,
        _ => exit::ABORTED,
    }
}

pub fn cmd_run(config_path: &Path, out: &Path, seed: Option<u64>, timings: bool, verbose: bool) -> u8 {
    let config = match load_config(config_path, seed) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return exit::USAGE;
        }
    };
    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return exit::USAGE;
    }
    if verbose {
        eprintln!(
            "running {} epochs with {} clients (seed {})",
            config.epochs, config.clients.n, config.seed
        );
    }
    let options = RunOptions {
        record_transcript: true,
        timings,
    };
    let report = match run_training(&config, options) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return training_exit_code(&e);
        }
    };
    let log = encode_log(report.transcripts.iter().flat_map(|r| &r.messages));
    let index = TranscriptIndex::build(&config, &report, log.len());
    let writes = [
        (METRICS_FILE, metrics_csv(&report.rounds).into_bytes()),
        (SUMMARY_FILE, summary_json(&config, &report).into_bytes()),
        (LOG_FILE, log),
        (
            INDEX_FILE,
            serde_json::to_string_pretty(&index).expect("index serializes").into_bytes(),
        ),
    ];
    for (name, bytes) in writes {
        let path = out.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return exit::USAGE;
        }
    }
    println!(
        "final accuracy {:.4} after {} epochs; {} messages logged; ledger violations {}",
        report.final_accuracy,
        report.rounds.len(),
        index.messages,
        report.ledger_violations
    );
    exit::OK
}
