//! Orchestration of one aggregation: rounds, dropouts, checks, transcript.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::{ClientState, UpdateProver};
use super::graph::{build_neighbor_graph, default_threshold, GraphMode};
use super::message::{Message, MessageKind, SERVER};
use super::server::ServerState;
use super::transcript::RoundTranscript;
use super::AggregationError;
use crate::adversary::Deviation;
use crate::crypto::GroupElement;
use crate::field::count_muls;
use crate::fixed::FixedVec;
use crate::robust::sample_indices;
use crate::seed::derive_seed;
use crate::zk::ProofVerdict;

/// Round boundary after which a client stops responding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropPoint {
    /// Shares were sent; no masked update.
    AfterRound1,
    /// Masked update sent; no proof and no share responses.
    AfterRound2,
    /// Proof completed; no share responses.
    AfterProof,
}

pub type DropoutScript = BTreeMap<u32, DropPoint>;

/// Sampled correctness checks: `q` indices per client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckPlan {
    pub q: usize,
    pub sampling_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub session_seed: u64,
    pub graph: GraphMode,
    /// Shamir threshold; defaults to `floor(2k/3) + 1`.
    pub threshold: Option<usize>,
    pub checks: Option<CheckPlan>,
    /// Flags the aggregate when a decoded per-client mean coordinate exceeds this.
    pub magnitude_bound: Option<f64>,
}

impl AggregationConfig {
    pub fn new(session_seed: u64) -> Self {
        AggregationConfig {
            session_seed,
            graph: GraphMode::Auto,
            threshold: None,
            checks: None,
            magnitude_bound: None,
        }
    }
}

/// A client's input to one aggregation.
#[derive(Debug)]
pub struct Participant {
    pub id: u32,
    pub update: FixedVec,
    pub deviation: Deviation,
    pub prover: UpdateProver,
}

impl Participant {
    pub fn new(id: u32, update: FixedVec, deviation: Deviation, prover_seed: u64) -> Self {
        Participant {
            id,
            update,
            deviation,
            prover: UpdateProver::new(prover_seed),
        }
    }

    pub fn honest(id: u32, update: FixedVec, prover_seed: u64) -> Self {
        Self::new(id, update, Deviation::Honest, prover_seed)
    }
}

struct Round2Output {
    messages: Vec<Message>,
    verdict: Option<ProofVerdict>,
    muls: u64,
    proof_muls: u64,
}

/// Runs the three rounds over `participants`.
///
/// Clients failing their correctness proof are recorded and left out of the
/// aggregate; too few shares to unmask a needed client aborts the run.
pub fn run_aggregation(
    config: &AggregationConfig,
    participants: &mut [Participant],
    dropouts: &DropoutScript,
) -> Result<RoundTranscript, AggregationError> {
    participants.sort_by_key(|p| p.id);
    let ids: Vec<u32> = participants.iter().map(|p| p.id).collect();
    if ids.len() < 2 {
        return Err(AggregationError::Parameter(format!(
            "need at least two participants, got {}",
            ids.len()
        )));
    }
    if ids[0] == SERVER || ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(AggregationError::Parameter(
            "client ids must be distinct and nonzero".into(),
        ));
    }
    let len = participants[0].update.len();
    let scale_bits = participants[0].update.scale_bits;
    if participants
        .iter()
        .any(|p| p.update.len() != len || p.update.scale_bits != scale_bits)
    {
        return Err(AggregationError::Parameter(
            "updates differ in length or scale".into(),
        ));
    }
    if let Some(plan) = config.checks {
        if plan.q > len {
            return Err(AggregationError::Parameter(format!(
                "cannot check {} of {len} coordinates",
                plan.q
            )));
        }
    }

    let graph = build_neighbor_graph(
        ids.len(),
        config.graph,
        derive_seed(config.session_seed, "graph", &[]),
    )?;
    let position: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let neighbors_of = |c: u32| -> Vec<u32> {
        graph.neighbors(position[&c]).iter().map(|&j| ids[j]).collect()
    };
    let threshold = config.threshold.unwrap_or_else(|| default_threshold(graph.k));
    if threshold == 0 || threshold > graph.k {
        return Err(AggregationError::Parameter(format!(
            "threshold {threshold} must lie in [1, {}]",
            graph.k
        )));
    }

    let mut log: Vec<Message> = Vec::new();
    let mut server = ServerState::new(ids.clone());
    let mut clients: Vec<ClientState> = participants
        .iter()
        .map(|p| ClientState::new(p.id, neighbors_of(p.id), config.session_seed, &p.deviation))
        .collect();

    // key advertisement
    for c in &clients {
        let m = c.public_key_message();
        server.receive_public_key(&m)?;
        log.push(m);
    }
    let key_lists: Vec<Message> = clients
        .iter()
        .map(|c| server.neighbor_keys_message(c.id, c.neighbors()))
        .collect();
    log.extend(key_lists.iter().cloned());

    // round 1
    let round1: Vec<(Result<Vec<Message>, AggregationError>, u64)> = clients
        .par_iter_mut()
        .zip(&key_lists)
        .map(|(c, keys)| {
            let pks: BTreeMap<u32, GroupElement> = keys
                .payload
                .chunks_exact(2)
                .map(|p| (p[0] as u32, GroupElement(p[1])))
                .collect();
            count_muls(|| c.round1_mask_gen(&pks, threshold))
        })
        .collect();
    let mut client_muls: BTreeMap<u32, u64> = BTreeMap::new();
    let mut share_messages = Vec::new();
    for (c, (out, muls)) in clients.iter().zip(round1) {
        client_muls.insert(c.id, muls);
        share_messages.extend(out?);
    }
    for m in &share_messages {
        clients[position[&m.receiver]].receive_shares(m)?;
    }
    log.extend(share_messages);

    // round 2 with correctness checks
    let active = |c: u32| dropouts.get(&c) != Some(&DropPoint::AfterRound1);
    let round2: Vec<Option<Round2Output>> = clients
        .par_iter_mut()
        .zip(participants.par_iter_mut())
        .map(|(c, p)| {
            if !active(c.id) {
                return None;
            }
            let (v, muls) = count_muls(|| c.round2_mask_update(&p.update, &p.deviation));
            let mut messages = vec![Message::new(
                MessageKind::MaskedUpdate,
                c.id,
                SERVER,
                v.coords.iter().map(|e| e.value()).collect(),
            )];
            let mut verdict = None;
            let mut proof_muls = 0;
            if let Some(plan) = config.checks {
                let indices = sample_indices(len, plan.q, plan.sampling_seed, c.id)
                    .expect("q validated against the update length");
                messages.push(Message::new(
                    MessageKind::IndexSample,
                    SERVER,
                    c.id,
                    indices.iter().map(|&k| k as u64).collect(),
                ));
                if dropouts.get(&c.id) != Some(&DropPoint::AfterRound2) {
                    let start = p.prover.session().transcript().len();
                    let (v, m) = count_muls(|| c.prove_correctness(&mut p.prover, &p.update, &indices));
                    proof_muls = m;
                    messages.push(Message::new(
                        MessageKind::Proof,
                        c.id,
                        SERVER,
                        p.prover.transcript_digest(start),
                    ));
                    messages.push(Message::new(
                        MessageKind::Verdict,
                        SERVER,
                        c.id,
                        vec![v.passed as u64],
                    ));
                    verdict = Some(v);
                }
            }
            Some(Round2Output {
                messages,
                verdict,
                muls,
                proof_muls,
            })
        })
        .collect();

    let mut accepted = BTreeSet::new();
    let mut verdicts = BTreeMap::new();
    let mut proof_muls = BTreeMap::new();
    for (c, out) in clients.iter().zip(round2) {
        let Some(out) = out else { continue };
        *client_muls.get_mut(&c.id).expect("recorded in round 1") += out.muls;
        proof_muls.insert(c.id, out.proof_muls);
        let masked = c.masked().expect("round 2 ran").clone();
        server.masked.insert(c.id, masked);
        let ok = match (&config.checks, &out.verdict) {
            (None, _) => true,
            (Some(_), Some(v)) => v.passed,
            (Some(_), None) => false,
        };
        if ok {
            accepted.insert(c.id);
        }
        if let Some(v) = out.verdict {
            verdicts.insert(c.id, v);
        }
        log.extend(out.messages);
    }
    server.finalize_sets(&accepted);

    // round 3: rejected clients are excluded from the sum but still online
    for c in clients.iter_mut() {
        if dropouts.contains_key(&c.id) {
            continue;
        }
        let Some(request) = server.share_request(c.id, &neighbors_of(c.id), neighbors_of) else {
            continue;
        };
        let response = c.respond(&request);
        server.receive_response(&response)?;
        log.push(request);
        log.push(response);
    }
    let aggregate = server.round3_unmask(threshold, len, scale_bits, neighbors_of)?;
    log.push(Message::new(
        MessageKind::Aggregate,
        SERVER,
        SERVER,
        aggregate.coords.iter().map(|e| e.value()).collect(),
    ));

    let magnitude_flag = match config.magnitude_bound {
        Some(bound) if !server.survivors.is_empty() => {
            let n = server.survivors.len() as f64;
            aggregate.decode().iter().any(|x| (x / n).abs() > bound)
        }
        _ => false,
    };

    Ok(RoundTranscript {
        messages: log,
        aggregate,
        contributors: server.survivors.iter().copied().collect(),
        dropped: server.dropped.iter().copied().collect(),
        verdicts,
        ledger: server.ledger.clone(),
        magnitude_flag,
        degree: graph.k,
        threshold,
        client_muls,
        proof_muls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldElement;
    use crate::seed::rng_for;
    use crate::secagg::ShareKind;
    use rand::Rng;

    fn random_updates(n: usize, l: usize, seed: u64) -> Vec<Participant> {
        let mut rng = rng_for(seed, "test-updates", &[]);
        (1..=n as u32)
            .map(|id| {
                let coords = (0..l).map(|_| FieldElement::random(&mut rng)).collect();
                Participant::honest(id, FixedVec::from_coords(coords, 16), seed + id as u64)
            })
            .collect()
    }

    fn plaintext_sum(ps: &[Participant], ids: &[u32]) -> FixedVec {
        let mut s = FixedVec::zeros(ps[0].update.len(), 16);
        for p in ps.iter().filter(|p| ids.contains(&p.id)) {
            s.add_assign(&p.update).unwrap();
        }
        s
    }

    #[test]
    fn two_clients_masks_cancel() {
        let mut ps = random_updates(2, 1, 1);
        let t = run_aggregation(&AggregationConfig::new(5), &mut ps, &DropoutScript::new()).unwrap();
        assert_eq!(t.aggregate, plaintext_sum(&ps, &[1, 2]));
        assert_eq!(t.degree, 1);
    }

    #[test]
    fn no_dropouts_full_and_neighbor_modes() {
        for (n, mode) in [(8, GraphMode::Full), (30, GraphMode::Auto), (20, GraphMode::Neighbor(4))] {
            let mut ps = random_updates(n, 5, n as u64);
            let cfg = AggregationConfig {
                graph: mode,
                ..AggregationConfig::new(3)
            };
            let t = run_aggregation(&cfg, &mut ps, &DropoutScript::new()).unwrap();
            let all: Vec<u32> = (1..=n as u32).collect();
            assert_eq!(t.aggregate, plaintext_sum(&ps, &all));
            assert_eq!(t.contributors, all);
            assert!(t.dropped.is_empty());
            assert!(t.ledger.entries().all(|(_, k)| k == ShareKind::Seed));
        }
    }

    #[test]
    fn one_of_five_dropped_after_round_two_without_checks() {
        let mut ps = random_updates(5, 4, 9);
        let drops = DropoutScript::from([(3, DropPoint::AfterRound2)]);
        let cfg = AggregationConfig {
            graph: GraphMode::Full,
            ..AggregationConfig::new(1)
        };
        let t = run_aggregation(&cfg, &mut ps, &drops).unwrap();
        // no checks: the masked update counts, its seed comes from shares
        assert_eq!(t.aggregate, plaintext_sum(&ps, &[1, 2, 3, 4, 5]));
    }

    #[test]
    fn one_of_five_dropped_after_round_one() {
        let mut ps = random_updates(5, 4, 10);
        let drops = DropoutScript::from([(3, DropPoint::AfterRound1)]);
        let cfg = AggregationConfig {
            graph: GraphMode::Full,
            ..AggregationConfig::new(1)
        };
        let t = run_aggregation(&cfg, &mut ps, &drops).unwrap();
        assert_eq!(t.aggregate, plaintext_sum(&ps, &[1, 2, 4, 5]));
        assert_eq!(t.dropped, vec![3]);
        assert_eq!(t.ledger.get(3), Some(ShareKind::SecretKey));
        assert!(t.ledger_violations().is_empty());
    }

    #[test]
    fn dropout_monotonicity() {
        let cfg = AggregationConfig {
            graph: GraphMode::Full,
            checks: Some(CheckPlan { q: 2, sampling_seed: 4 }),
            ..AggregationConfig::new(8)
        };
        let mut ps = random_updates(7, 3, 11);
        let base = run_aggregation(&cfg, &mut ps, &DropoutScript::new()).unwrap();
        let mut ps = random_updates(7, 3, 11);
        let drops = DropoutScript::from([(6, DropPoint::AfterRound2)]);
        let with_drop = run_aggregation(&cfg, &mut ps, &drops).unwrap();
        let mut diff = base.aggregate.clone();
        diff.sub_assign(&with_drop.aggregate).unwrap();
        assert_eq!(diff, ps[5].update);
    }

    #[test]
    fn too_many_dropped_neighbors_abort() {
        let mut ps = random_updates(5, 2, 12);
        // full graph, k = 4, t = 3: two responders left for client 1
        let drops = DropoutScript::from([(2, DropPoint::AfterProof), (3, DropPoint::AfterProof)]);
        let cfg = AggregationConfig {
            graph: GraphMode::Full,
            threshold: Some(4),
            ..AggregationConfig::new(2)
        };
        let err = run_aggregation(&cfg, &mut ps, &drops).unwrap_err();
        assert!(matches!(err, AggregationError::InsufficientShares { needed: 4, .. }), "{err}");
    }

    #[test]
    fn failing_client_is_excluded() {
        let mut ps = random_updates(6, 10, 13);
        ps[2].deviation = Deviation::WrongMaskedCompute { fraction: 1.0, seed: 1 };
        let cfg = AggregationConfig {
            graph: GraphMode::Full,
            checks: Some(CheckPlan { q: 3, sampling_seed: 7 }),
            ..AggregationConfig::new(4)
        };
        let t = run_aggregation(&cfg, &mut ps, &DropoutScript::new()).unwrap();
        assert_eq!(t.rejected(), vec![3]);
        assert_eq!(t.aggregate, plaintext_sum(&ps, &[1, 2, 4, 5, 6]));
        assert_eq!(t.ledger.get(3), Some(ShareKind::SecretKey));
        assert!(t.verdicts.values().filter(|v| v.passed).count() == 5);
    }

    #[test]
    fn wrong_seed_is_caught_or_flagged() {
        let make = |checks| {
            let mut rng = rng_for(99, "small", &[]);
            let mut ps: Vec<Participant> = (1..=4)
                .map(|id| {
                    let u: Vec<f64> = (0..20).map(|_| rng.random_range(-0.5..0.5)).collect();
                    Participant::honest(id, FixedVec::encode(&u, 16).unwrap(), id as u64)
                })
                .collect();
            ps[1].deviation = Deviation::WrongSeed { seed: 5 };
            let cfg = AggregationConfig {
                graph: GraphMode::Full,
                checks,
                magnitude_bound: Some(10.0),
                ..AggregationConfig::new(6)
            };
            run_aggregation(&cfg, &mut ps, &DropoutScript::new()).unwrap()
        };
        let checked = make(Some(CheckPlan { q: 1, sampling_seed: 2 }));
        assert_eq!(checked.rejected(), vec![2]);
        assert!(!checked.magnitude_flag);
        let unchecked = make(None);
        assert!(unchecked.magnitude_flag);
    }

    #[test]
    fn replay_is_byte_identical() {
        let run = || {
            let mut ps = random_updates(12, 6, 21);
            let cfg = AggregationConfig {
                checks: Some(CheckPlan { q: 2, sampling_seed: 1 }),
                ..AggregationConfig::new(17)
            };
            let drops = DropoutScript::from([(4, DropPoint::AfterRound1)]);
            run_aggregation(&cfg, &mut ps, &drops).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a, b);
    }

    #[test]
    fn client_cost_is_recorded() {
        let mut ps = random_updates(16, 8, 3);
        let t = run_aggregation(&AggregationConfig::new(1), &mut ps, &DropoutScript::new()).unwrap();
        assert_eq!(t.client_muls.len(), 16);
        // each client masks with k + 1 seeds at 3 products per coordinate
        let k = t.degree as u64;
        assert!(t.client_muls.values().all(|&m| m >= 3 * 8 * (k + 1)));
    }
}
