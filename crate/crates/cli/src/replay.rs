use std::fs;
use std::path::{Path, PathBuf};

use secagg_robust::fl::{run_training, RunOptions};
use secagg_robust::secagg::{decode_log, AggregationError, Message};

use crate::exit;
use crate::run::{training_exit_code, TranscriptIndex, INDEX_FILE, LOG_FILE};

fn paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(LOG_FILE), path.join(INDEX_FILE))
    } else {
        (path.to_path_buf(), path.with_extension("json"))
    }
}

fn describe(m: &Message) -> String {
    format!(
        "{:?} {} -> {} ({} words)",
        m.kind,
        m.sender,
        m.receiver,
        m.payload.len()
    )
}

pub fn cmd_replay(path: &Path, verbose: bool) -> u8 {
    let (log_path, index_path) = paths(path);
    let index: TranscriptIndex = match fs::read_to_string(&index_path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: cannot load index {}: {e}", index_path.display());
            return exit::USAGE;
        }
    };
    let bytes = match fs::read(&log_path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", log_path.display());
            return exit::USAGE;
        }
    };
    let logged = match decode_log(&bytes) {
        Ok(m) => m,
        Err(e) => {
            match e.source {
                AggregationError::Truncated { needed, available } => eprintln!(
                    "replay failed: transcript truncated in message {} at byte {}: needs {needed} bytes, {available} available",
                    e.index, e.offset
                ),
                _ => eprintln!("replay failed: malformed transcript: {e}"),
            }
            return exit::CHECK_FAILED;
        }
    };
    if bytes.len() != index.bytes || logged.len() != index.messages {
        eprintln!(
            "replay failed: transcript truncated: index lists {} messages in {} bytes, log holds {} in {}",
            index.messages,
            index.bytes,
            logged.len(),
            bytes.len()
        );
        return exit::CHECK_FAILED;
    }
    if verbose {
        eprintln!("re-executing {} epochs", index.config.epochs);
    }
    let options = RunOptions {
        record_transcript: true,
        timings: false,
    };
    let report = match run_training(&index.config, options) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return training_exit_code(&e);
        }
    };
    let replayed: Vec<&Message> = report.transcripts.iter().flat_map(|r| &r.messages).collect();
    for (i, (a, b)) in logged.iter().zip(&replayed).enumerate() {
        if a != *b {
            eprintln!(
                "replay failed: first divergent message {i}: logged {}, replayed {}",
                describe(a),
                describe(b)
            );
            return exit::CHECK_FAILED;
        }
    }
    if logged.len() != replayed.len() {
        eprintln!(
            "replay failed: first divergent message {}: logged {} messages, replay produced {}",
            logged.len().min(replayed.len()),
            logged.len(),
            replayed.len()
        );
        return exit::CHECK_FAILED;
    }
    for (entry, record) in index.records.iter().zip(&report.transcripts) {
        if entry.record.contributors != record.contributors || entry.record.rejected != record.rejected {
            eprintln!(
                "replay failed: final state differs in epoch {} {:?} aggregation",
                record.epoch, record.stage
            );
            return exit::CHECK_FAILED;
        }
    }
    if index.records.len() != report.transcripts.len() || index.final_accuracy != report.final_accuracy {
        eprintln!("replay failed: final model state differs from the logged run");
        return exit::CHECK_FAILED;
    }
    println!("replay ok: {} messages in {} aggregations match", logged.len(), index.records.len());
    exit::OK
}
