//! Server side: collection, share requests, and unmasking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::message::{Message, MessageKind, SERVER};
use super::{AggregationError, ShareKind};
use crate::crypto::{key_agree, prg_expand, shamir_reconstruct, GroupElement, KeyPair, Seed, ShamirShare};
use crate::field::FieldElement;
use crate::fixed::FixedVec;

/// Which share type was requested for each client. A client's seed and its
/// secret key must never both be recovered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareLedger {
    requests: BTreeMap<u32, ShareKind>,
}

impl ShareLedger {
    /// Records a request; asking for the other share type of an already
    /// recorded client is a privacy violation and panics.
    pub fn record(&mut self, target: u32, kind: ShareKind) {
        if let Some(&prev) = self.requests.get(&target) {
            assert_eq!(
                prev, kind,
                "privacy violation: both seed and secret-key shares requested for client {target}"
            );
        }
        self.requests.insert(target, kind);
    }

    pub fn get(&self, target: u32) -> Option<ShareKind> {
        self.requests.get(&target).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, ShareKind)> + '_ {
        self.requests.iter().map(|(&c, &k)| (c, k))
    }
}

/// Independent audit over a message log: clients for which share requests of
/// both types appear.
pub fn audit_share_requests<'a>(messages: impl IntoIterator<Item = &'a Message>) -> Vec<u32> {
    let mut kinds: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
    for m in messages {
        if m.kind == MessageKind::ShareRequest {
            for pair in m.payload.chunks_exact(2) {
                kinds.entry(pair[1] as u32).or_default().insert(pair[0]);
            }
        }
    }
    kinds
        .into_iter()
        .filter(|(_, k)| k.len() > 1)
        .map(|(c, _)| c)
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct ServerState {
    pub participants: Vec<u32>,
    pub public_keys: BTreeMap<u32, GroupElement>,
    pub masked: BTreeMap<u32, FixedVec>,
    pub survivors: BTreeSet<u32>,
    pub dropped: BTreeSet<u32>,
    pub ledger: ShareLedger,
    shares: BTreeMap<(ShareKind, u32), Vec<ShamirShare>>,
    pub aggregate: Option<FixedVec>,
}

impl ServerState {
    pub fn new(mut participants: Vec<u32>) -> Self {
        participants.sort_unstable();
        ServerState {
            participants,
            ..ServerState::default()
        }
    }

    pub fn receive_public_key(&mut self, msg: &Message) -> Result<(), AggregationError> {
        let pk = GroupElement(*msg.payload.first().ok_or_else(|| {
            AggregationError::Malformed(format!("empty public key from {}", msg.sender))
        })?);
        if !pk.is_valid_public_key() {
            return Err(AggregationError::Crypto(crate::crypto::CryptoError::InvalidKey));
        }
        self.public_keys.insert(msg.sender, pk);
        Ok(())
    }

    /// The key list relayed to `client`.
    pub fn neighbor_keys_message(&self, client: u32, neighbors: &[u32]) -> Message {
        let mut payload = Vec::with_capacity(2 * neighbors.len());
        for j in neighbors {
            if let Some(pk) = self.public_keys.get(j) {
                payload.extend_from_slice(&[*j as u64, pk.0]);
            }
        }
        Message::new(MessageKind::NeighborKeys, SERVER, client, payload)
    }

    /// Splits participants into `U_s` (accepted masked update) and `U_d`.
    pub fn finalize_sets(&mut self, accepted: &BTreeSet<u32>) {
        self.survivors = accepted.clone();
        self.dropped = self
            .participants
            .iter()
            .copied()
            .filter(|c| !accepted.contains(c))
            .collect();
        self.masked.retain(|c, _| accepted.contains(c));
    }

    /// Share requests for one responder: seeds of surviving neighbors and
    /// secret keys of dropped neighbors that have a surviving neighbor.
    pub fn share_request(
        &mut self,
        responder: u32,
        responder_neighbors: &[u32],
        neighbors_of: impl Fn(u32) -> Vec<u32>,
    ) -> Option<Message> {
        let mut payload = Vec::new();
        for &target in responder_neighbors {
            let kind = if self.survivors.contains(&target) {
                ShareKind::Seed
            } else if neighbors_of(target).iter().any(|j| self.survivors.contains(j)) {
                ShareKind::SecretKey
            } else {
                continue;
            };
            self.ledger.record(target, kind);
            payload.extend_from_slice(&[kind.word(), target as u64]);
        }
        (!payload.is_empty()).then(|| Message::new(MessageKind::ShareRequest, SERVER, responder, payload))
    }

    pub fn receive_response(&mut self, msg: &Message) -> Result<(), AggregationError> {
        for triple in msg.payload.chunks_exact(3) {
            let kind = ShareKind::from_word(triple[0])
                .ok_or_else(|| AggregationError::Malformed(format!("bad share kind {}", triple[0])))?;
            let target = triple[1] as u32;
            if self.ledger.get(target) != Some(kind) {
                return Err(AggregationError::Malformed(format!(
                    "unrequested share for client {target} from {}",
                    msg.sender
                )));
            }
            self.shares.entry((kind, target)).or_default().push(ShamirShare {
                index: msg.sender,
                value: FieldElement::new(triple[2]),
            });
        }
        Ok(())
    }

    /// Round 3: `sum v_i - sum r_i + corrections` over `U_s`, with the pairwise
    /// masks toward dropped neighbors regenerated from their recovered keys.
    pub fn round3_unmask(
        &mut self,
        threshold: usize,
        len: usize,
        scale_bits: u32,
        neighbors_of: impl Fn(u32) -> Vec<u32>,
    ) -> Result<FixedVec, AggregationError> {
        let mut agg = FixedVec::zeros(len, scale_bits);
        for (&i, v) in &self.masked {
            agg.add_assign(v)?;
            let b = self.reconstruct(ShareKind::Seed, i, threshold)?;
            for (a, r) in agg.coords.iter_mut().zip(prg_expand(Seed(b), len)) {
                *a -= r;
            }
        }
        for &j in &self.dropped {
            let survivors: Vec<u32> = neighbors_of(j)
                .into_iter()
                .filter(|i| self.survivors.contains(i))
                .collect();
            if survivors.is_empty() {
                continue;
            }
            let sk = self.reconstruct(ShareKind::SecretKey, j, threshold)?;
            let pk_j = self.public_keys.get(&j).copied();
            if KeyPair::from_secret(sk).map(|kp| kp.pk) != pk_j {
                return Err(AggregationError::ReconstructionMismatch { client: j });
            }
            for i in survivors {
                let pk_i = self.public_keys[&i];
                let m = prg_expand(key_agree(sk, pk_i)?, len);
                // v_i carries -m when j < i and +m when j > i
                for (a, mk) in agg.coords.iter_mut().zip(m) {
                    if j < i {
                        *a += mk;
                    } else {
                        *a -= mk;
                    }
                }
            }
        }
        self.aggregate = Some(agg.clone());
        Ok(agg)
    }

    fn reconstruct(&self, kind: ShareKind, client: u32, threshold: usize) -> Result<FieldElement, AggregationError> {
        let shares = self.shares.get(&(kind, client)).map(Vec::as_slice).unwrap_or(&[]);
        if shares.len() < threshold {
            return Err(AggregationError::InsufficientShares {
                client,
                kind,
                needed: threshold,
                got: shares.len(),
            });
        }
        Ok(shamir_reconstruct(shares, threshold)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_accepts_repeats_of_one_kind() {
        let mut l = ShareLedger::default();
        l.record(3, ShareKind::Seed);
        l.record(3, ShareKind::Seed);
        l.record(4, ShareKind::SecretKey);
        assert_eq!(l.get(3), Some(ShareKind::Seed));
        assert_eq!(l.entries().count(), 2);
    }

    #[test]
    #[should_panic(expected = "privacy violation")]
    fn ledger_panics_on_both_kinds() {
        let mut l = ShareLedger::default();
        l.record(3, ShareKind::Seed);
        l.record(3, ShareKind::SecretKey);
    }

    #[test]
    fn audit_finds_mixed_requests() {
        let ok = Message::new(MessageKind::ShareRequest, 0, 1, vec![0, 5, 1, 6]);
        let bad = Message::new(MessageKind::ShareRequest, 0, 2, vec![1, 5]);
        assert!(audit_share_requests([&ok]).is_empty());
        assert_eq!(audit_share_requests([&ok, &bad]), vec![5]);
    }
}
