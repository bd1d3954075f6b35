//! Client side of the three-round protocol.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::message::{Message, MessageKind, SERVER};
use super::{AggregationError, ShareKind};
use crate::adversary::{attacked_coordinates, Deviation};
use crate::crypto::{key_agree, prg_eval, shamir_share, GroupElement, KeyPair, Seed};
use crate::field::FieldElement;
use crate::fixed::FixedVec;
use crate::robust::RobustnessBounds;
use crate::seed::rng_for;
use crate::zk::{
    correctness_circuit, range_bits, robustness_circuit, AuthValue, Circuit, CorrectnessInput,
    DealerBudget, PairwiseSeed, ProofVerdict, RobustnessInput, ZkError, ZkSession,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClientRound {
    R1,
    R2,
    R3,
    Done,
}

/// Per-aggregation client state: fresh keys and seeds every run.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: u32,
    keypair: KeyPair,
    b: Seed,
    mask_seed: Seed,
    neighbors: Vec<u32>,
    pairwise: Vec<(u32, Seed)>,
    received: BTreeMap<u32, (FieldElement, FieldElement)>,
    masked: Option<FixedVec>,
    round: ClientRound,
    rng: ChaCha20Rng,
}

impl ClientState {
    /// `neighbors` are global client ids.
    pub fn new(id: u32, mut neighbors: Vec<u32>, rng_seed: u64, deviation: &Deviation) -> Self {
        let mut rng = rng_for(rng_seed, "client", &[id as u64]);
        let keypair = KeyPair::generate(&mut rng);
        let b = Seed::random(&mut rng);
        let mask_seed = match *deviation {
            Deviation::WrongSeed { seed } => {
                let mut other = Seed::random(&mut rng_for(seed, "wrong-seed", &[]));
                if other == b {
                    other = Seed(other.0 + FieldElement::ONE);
                }
                other
            }
            _ => b,
        };
        neighbors.sort_unstable();
        ClientState {
            id,
            keypair,
            b,
            mask_seed,
            neighbors,
            pairwise: Vec::new(),
            received: BTreeMap::new(),
            masked: None,
            round: ClientRound::R1,
            rng,
        }
    }

    pub fn round(&self) -> ClientRound {
        self.round
    }

    pub fn public_key(&self) -> GroupElement {
        self.keypair.pk
    }

    pub fn neighbors(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn pairwise_seeds(&self) -> &[(u32, Seed)] {
        &self.pairwise
    }

    pub fn seed(&self) -> Seed {
        self.b
    }

    pub fn masked(&self) -> Option<&FixedVec> {
        self.masked.as_ref()
    }

    pub fn public_key_message(&self) -> Message {
        Message::new(MessageKind::PublicKey, self.id, SERVER, vec![self.keypair.pk.0])
    }

    /// Round 1: agree on pairwise seeds and secret-share `sk` and `b`.
    pub fn round1_mask_gen(
        &mut self,
        neighbor_pks: &BTreeMap<u32, GroupElement>,
        threshold: usize,
    ) -> Result<Vec<Message>, AggregationError> {
        assert_eq!(self.round, ClientRound::R1, "client {} is not in round 1", self.id);
        let mut pairwise = Vec::with_capacity(self.neighbors.len());
        for &j in &self.neighbors {
            let pk = neighbor_pks
                .get(&j)
                .ok_or(AggregationError::MissingKey { client: self.id, neighbor: j })?;
            pairwise.push((j, key_agree(self.keypair.sk, *pk)?));
        }
        let mut messages = Vec::with_capacity(self.neighbors.len());
        if !self.neighbors.is_empty() {
            let sk_shares = shamir_share(self.keypair.sk, threshold, &self.neighbors, &mut self.rng)?;
            let b_shares = shamir_share(self.b.0, threshold, &self.neighbors, &mut self.rng)?;
            for (s, b) in sk_shares.iter().zip(&b_shares) {
                messages.push(Message::new(
                    MessageKind::Shares,
                    self.id,
                    s.index,
                    vec![s.value.value(), b.value.value()],
                ));
            }
        }
        self.pairwise = pairwise;
        self.round = ClientRound::R2;
        Ok(messages)
    }

    /// Stores a neighbor's share pair.
    pub fn receive_shares(&mut self, msg: &Message) -> Result<(), AggregationError> {
        if msg.kind != MessageKind::Shares || msg.receiver != self.id || msg.payload.len() != 2 {
            return Err(AggregationError::Malformed(format!(
                "client {} cannot accept {:?} from {}",
                self.id, msg.kind, msg.sender
            )));
        }
        let sk = FieldElement::new(msg.payload[0]);
        let b = FieldElement::new(msg.payload[1]);
        self.received.insert(msg.sender, (sk, b));
        Ok(())
    }

    /// Round 2: `v = u + r - sum_{j<i} m_ij + sum_{j>i} m_ij` over neighbors.
    pub fn round2_mask_update(&mut self, update: &FixedVec, deviation: &Deviation) -> FixedVec {
        assert_eq!(self.round, ClientRound::R2, "client {} is not in round 2", self.id);
        let mut v = update.clone();
        for (k, x) in v.coords.iter_mut().enumerate() {
            let mut acc = *x + prg_eval(self.mask_seed, k);
            for &(j, a) in &self.pairwise {
                let m = prg_eval(a, k);
                if j < self.id {
                    acc -= m;
                } else {
                    acc += m;
                }
            }
            *x = acc;
        }
        if let Deviation::WrongMaskedCompute { fraction, seed } = *deviation {
            let mut rng = rng_for(seed, "masked-offset", &[self.id as u64]);
            for k in attacked_coordinates(v.len(), fraction, seed) {
                v.coords[k] += FieldElement::random_nonzero(&mut rng);
            }
        }
        self.masked = Some(v.clone());
        self.round = ClientRound::R3;
        v
    }

    /// Proves that the sent masked update matches the authenticated update
    /// and seeds at `indices`.
    pub fn prove_correctness(
        &self,
        prover: &mut UpdateProver,
        update: &FixedVec,
        indices: &[usize],
    ) -> ProofVerdict {
        let Some(masked) = &self.masked else {
            return ProofVerdict::fail(Circuit::Correctness, None, ZkError::MalformedTranscript);
        };
        let fresh = indices.iter().filter(|k| !prover.committed.contains_key(k)).count();
        let mut budget = DealerBudget::correctness(indices.len(), self.pairwise.len());
        budget.authentications -= indices.len() - fresh;
        prover.session.provision(budget);
        let result = (|| -> Result<ProofVerdict, ZkError> {
            let individual_seed = prover.session.authenticate(self.b.0)?;
            let pairwise = self
                .pairwise
                .iter()
                .map(|&(j, a)| {
                    Ok(PairwiseSeed {
                        neighbor: j,
                        seed: prover.session.authenticate(a.0)?,
                    })
                })
                .collect::<Result<Vec<_>, ZkError>>()?;
            let committed = prover.commit(update, indices)?;
            Ok(correctness_circuit(
                &mut prover.session,
                &CorrectnessInput {
                    client: self.id,
                    individual_seed,
                    pairwise: &pairwise,
                    update: &committed,
                    masked: &masked.coords,
                },
            ))
        })();
        result.unwrap_or_else(|e| ProofVerdict::fail(Circuit::Correctness, None, e))
    }

    /// Round 3: answers the server's share requests from stored shares.
    pub fn respond(&mut self, request: &Message) -> Message {
        let mut payload = Vec::new();
        for pair in request.payload.chunks_exact(2) {
            let target = pair[1] as u32;
            let Some(&(sk, b)) = self.received.get(&target) else {
                continue;
            };
            let value = match ShareKind::from_word(pair[0]) {
                Some(ShareKind::Seed) => b,
                Some(ShareKind::SecretKey) => sk,
                None => continue,
            };
            payload.extend_from_slice(&[pair[0], pair[1], value.value()]);
        }
        self.round = ClientRound::Done;
        Message::new(MessageKind::ShareResponse, self.id, SERVER, payload)
    }
}

/// A client's long-lived proof session for one training round.
///
/// Update coordinates are authenticated once and the same handles serve
/// every later proof, so a client cannot show different values to different
/// checks.
#[derive(Debug)]
pub struct UpdateProver {
    session: ZkSession,
    committed: BTreeMap<usize, AuthValue>,
}

impl UpdateProver {
    pub fn new(seed: u64) -> Self {
        UpdateProver {
            session: ZkSession::new(seed),
            committed: BTreeMap::new(),
        }
    }

    pub fn session(&self) -> &ZkSession {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut ZkSession {
        &mut self.session
    }

    pub fn committed(&self, k: usize) -> Option<AuthValue> {
        self.committed.get(&k).copied()
    }

    /// Handles for `u^k` at `indices`, authenticating the ones not seen yet.
    /// The dealer budget for fresh coordinates must already be provisioned.
    pub fn commit(
        &mut self,
        update: &FixedVec,
        indices: &[usize],
    ) -> Result<Vec<(usize, AuthValue)>, ZkError> {
        indices
            .iter()
            .map(|&k| {
                let handle = match self.committed.get(&k) {
                    Some(&h) => h,
                    None => {
                        let value = *update.coords.get(k).ok_or(ZkError::MalformedTranscript)?;
                        let h = self.session.authenticate(value)?;
                        self.committed.insert(k, h);
                        h
                    }
                };
                Ok((k, handle))
            })
            .collect()
    }

    /// Proves `|u^k - lambda^k| < theta^k` at `indices`.
    ///
    /// An inconsistent client presents `lambda^k` in place of its committed
    /// value, which passes the plaintext bound but not the MAC check.
    pub fn prove_robustness(
        &mut self,
        update: &FixedVec,
        indices: &[usize],
        bounds: &RobustnessBounds,
        deviation: &Deviation,
    ) -> ProofVerdict {
        let fresh = indices.iter().filter(|k| !self.committed.contains_key(k)).count();
        self.session.provision(DealerBudget {
            authentications: fresh,
            triples: 0,
        });
        self.session.provision(DealerBudget::robustness(indices.len(), range_bits(&bounds.theta.coords)));
        let committed = match self.commit(update, indices) {
            Ok(c) => c,
            Err(e) => return ProofVerdict::fail(Circuit::Robustness, None, e),
        };
        if *deviation == Deviation::InconsistentUpdate {
            for &(k, h) in &committed {
                let claimed = bounds.lambda.coords[k];
                if self.session.prover_view(h).0 != claimed {
                    self.session.tamper_prover_value(h, claimed);
                }
            }
        }
        robustness_circuit(
            &mut self.session,
            &RobustnessInput {
                update: &committed,
                lambda: &bounds.lambda.coords,
                theta: &bounds.theta.coords,
            },
        )
    }

    /// Words appended to the proof transcript since `from`, hashed for the log.
    pub fn transcript_digest(&self, from: usize) -> Vec<u64> {
        let words = &self.session.transcript().0[from..];
        let mut h = Sha256::new();
        for w in words {
            h.update(w.to_le_bytes());
        }
        let d = h.finalize();
        let mut out = vec![words.len() as u64];
        out.extend(d.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))));
        out
    }
}
