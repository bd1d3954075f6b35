//! Three-round secure aggregation with pairwise masks, dropout recovery and
//! per-client correctness checks.
//!
//! Clients and the server are explicit state machines exchanging
//! [`Message`]s through an in-process orchestrator ([`run_aggregation`]),
//! which logs every message into a [`RoundTranscript`].

mod client;
mod graph;
mod message;
mod protocol;
mod server;
mod transcript;

pub use client::{ClientRound, ClientState, UpdateProver};
pub use graph::{build_neighbor_graph, default_degree, default_threshold, GraphMode, NeighborGraph};
pub use message::{Message, MessageKind, SERVER};
pub use protocol::{
    run_aggregation, AggregationConfig, CheckPlan, DropPoint, DropoutScript, Participant,
};
pub use server::{audit_share_requests, ServerState, ShareLedger};
pub use transcript::{decode_log, encode_log, LogError, RoundTranscript};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::CryptoError;
use crate::fixed::NumericError;

/// Which secret a share request targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareKind {
    /// The individual mask seed `b_i` of a surviving client.
    Seed,
    /// The key-agreement secret `sk_i` of a dropped client.
    SecretKey,
}

impl ShareKind {
    pub fn word(self) -> u64 {
        match self {
            ShareKind::Seed => 0,
            ShareKind::SecretKey => 1,
        }
    }

    pub fn from_word(w: u64) -> Option<Self> {
        match w {
            0 => Some(ShareKind::Seed),
            1 => Some(ShareKind::SecretKey),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregationError {
    #[error("invalid aggregation parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("client {client} is missing the public key of neighbor {neighbor}")]
    MissingKey { client: u32, neighbor: u32 },
    #[error("aborting: only {got} of {needed} {kind:?} shares available for client {client}")]
    InsufficientShares {
        client: u32,
        kind: ShareKind,
        needed: usize,
        got: usize,
    },
    #[error("reconstructed key of client {client} does not match its public key")]
    ReconstructionMismatch { client: u32 },
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("truncated input: need {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
}
