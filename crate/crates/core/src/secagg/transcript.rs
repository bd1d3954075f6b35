//! Aggregation transcripts and the flat binary message log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::message::Message;
use super::server::{audit_share_requests, ShareLedger};
use super::AggregationError;
use crate::fixed::FixedVec;
use crate::zk::ProofVerdict;

/// Everything one aggregation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub messages: Vec<Message>,
    pub aggregate: FixedVec,
    /// `U_s`: clients whose masked update is in the aggregate.
    pub contributors: Vec<u32>,
    /// `U_d`: dropped or rejected clients.
    pub dropped: Vec<u32>,
    /// Correctness verdicts, present only when checks ran.
    pub verdicts: BTreeMap<u32, ProofVerdict>,
    pub ledger: ShareLedger,
    pub magnitude_flag: bool,
    pub degree: usize,
    pub threshold: usize,
    /// Field multiplications per client for key agreement, sharing and masking.
    pub client_muls: BTreeMap<u32, u64>,
    /// Field multiplications per client spent on its correctness proof.
    pub proof_muls: BTreeMap<u32, u64>,
}

impl RoundTranscript {
    pub fn rejected(&self) -> Vec<u32> {
        self.verdicts
            .iter()
            .filter(|(_, v)| !v.passed)
            .map(|(&c, _)| c)
            .collect()
    }

    /// Clients for which both share types were requested; always empty
    /// unless the ledger has been bypassed.
    pub fn ledger_violations(&self) -> Vec<u32> {
        audit_share_requests(&self.messages)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_log(&self.messages)
    }
}

/// Concatenated message encodings.
pub fn encode_log<'a>(messages: impl IntoIterator<Item = &'a Message>) -> Vec<u8> {
    let mut out = Vec::new();
    for m in messages {
        m.encode_into(&mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("message {index} at byte {offset}: {source}")]
pub struct LogError {
    pub index: usize,
    pub offset: usize,
    pub source: AggregationError,
    /// Messages decoded before the failure.
    pub decoded: Vec<Message>,
}

pub fn decode_log(bytes: &[u8]) -> Result<Vec<Message>, LogError> {
    let mut out = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        match Message::decode(&bytes[offset..]) {
            Ok((m, used)) => {
                out.push(m);
                offset += used;
            }
            Err(source) => {
                return Err(LogError {
                    index: out.len(),
                    offset,
                    source,
                    decoded: out,
                })
            }
        }
    }
    Ok(out)
}
