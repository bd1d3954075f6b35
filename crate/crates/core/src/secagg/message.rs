//! Protocol messages and their byte encoding.
//!
//! `kind u8 | sender u32 | receiver u32 | payload length u32 | payload`, all
//! little-endian, with the payload a sequence of `u64` words.

use serde::{Deserialize, Serialize};

use super::AggregationError;

/// Party id of the server.
pub const SERVER: u32 = 0;

const HEADER_LEN: usize = 1 + 4 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum MessageKind {
    /// Client public key: `[pk]`.
    PublicKey = 1,
    /// Neighbor key list relayed by the server: `[id, pk]*`.
    NeighborKeys = 2,
    /// Shares of the sender's secret key and seed: `[sk_share, b_share]`.
    Shares = 3,
    /// Sampled indices for the correctness check.
    IndexSample = 4,
    /// The masked update `v_i`.
    MaskedUpdate = 5,
    /// Digest of the sender's proof transcript: `[words, d0, d1, d2, d3]`.
    Proof = 6,
    /// Verifier decision: `[1]` pass, `[0]` fail.
    Verdict = 7,
    /// Share requests: `[kind, target]*` with kind 0 = seed, 1 = secret key.
    ShareRequest = 8,
    /// Share responses: `[kind, target, value]*`.
    ShareResponse = 9,
    /// The unmasked aggregate.
    Aggregate = 10,
}

impl MessageKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        use MessageKind::*;
        Some(match b {
            1 => PublicKey,
            2 => NeighborKeys,
            3 => Shares,
            4 => IndexSample,
            5 => MaskedUpdate,
            6 => Proof,
            7 => Verdict,
            8 => ShareRequest,
            9 => ShareResponse,
            10 => Aggregate,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: u32,
    pub receiver: u32,
    pub payload: Vec<u64>,
}

impl Message {
    pub fn new(kind: MessageKind, sender: u32, receiver: u32, payload: Vec<u64>) -> Self {
        Message {
            kind,
            sender,
            receiver,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 8 * self.payload.len()
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.kind as u8);
        out.extend_from_slice(&self.sender.to_le_bytes());
        out.extend_from_slice(&self.receiver.to_le_bytes());
        out.extend_from_slice(&((8 * self.payload.len()) as u32).to_le_bytes());
        for w in &self.payload {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    /// Decodes one message from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), AggregationError> {
        if bytes.len() < HEADER_LEN {
            return Err(AggregationError::Truncated {
                needed: HEADER_LEN,
                available: bytes.len(),
            });
        }
        let kind = MessageKind::from_byte(bytes[0])
            .ok_or_else(|| AggregationError::Malformed(format!("unknown message kind {}", bytes[0])))?;
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let sender = word(1);
        let receiver = word(5);
        let len = word(9) as usize;
        if len % 8 != 0 {
            return Err(AggregationError::Malformed(format!(
                "payload length {len} is not a whole number of words"
            )));
        }
        let total = HEADER_LEN + len;
        if bytes.len() < total {
            return Err(AggregationError::Truncated {
                needed: total,
                available: bytes.len(),
            });
        }
        let payload = bytes[HEADER_LEN..total]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((Message::new(kind, sender, receiver, payload), total))
    }
}
