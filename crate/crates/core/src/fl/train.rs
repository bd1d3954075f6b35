//! The per-round training pipeline.
//!
//! Step 1 aggregates each random cluster securely (with sampled correctness
//! proofs) to obtain cluster means and the bounds `lambda`, `theta`. Step 2
//! has every remaining client prove `|u - lambda| < theta` on its sampled
//! coordinates. Step 3 aggregates the clients that passed, and the server
//! applies their mean update.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AggregationMode, DataSource, ExperimentConfig, Stage};
use super::data::{gen_synthetic_data, ingest_csv_dataset, CsvSchema, Dataset, SyntheticSpec};
use super::model::{local_step, Model};
use super::TrainingError;
use crate::adversary::Deviation;
use crate::fixed::FixedVec;
use crate::robust::{
    cluster_assign, cluster_means, compute_q, derive_threshold, sample_indices, tune_eta, EtaReport,
};
use crate::secagg::{
    run_aggregation, AggregationConfig, CheckPlan, DropoutScript, Message, Participant, RoundTranscript,
};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every aggregation's message log in the report.
    pub record_transcript: bool,
    /// Measure wall-clock time per step; otherwise phase times are zero.
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub epoch: usize,
    pub accuracy: f64,
    pub flagged_correctness: Vec<u32>,
    pub flagged_robustness: Vec<u32>,
    /// Clients whose aggregate tripped the magnitude monitor.
    pub flagged_magnitude: Vec<u32>,
    pub contributors: Vec<u32>,
    /// Euclidean norm of the applied mean update.
    pub agg_norm: f64,
    pub phase_ms: [u64; 3],
    pub cluster_mean_norms: Vec<f64>,
    pub q: Option<usize>,
    pub eta: Option<EtaReport>,
    /// Decoded robustness bounds, empty when the defense did not reach step 2.
    pub lambda: Vec<f64>,
    pub theta: Vec<f64>,
    /// No update was applied this round.
    pub skipped: bool,
}

/// One aggregation's log, tagged with where it ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub cluster: Option<usize>,
    pub contributors: Vec<u32>,
    pub rejected: Vec<u32>,
    #[serde(skip)]
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub rounds: Vec<RoundMetrics>,
    pub final_accuracy: f64,
    pub byzantine: Vec<u32>,
    pub parameters: usize,
    pub aggregations: usize,
    /// Clients for which some log shows requests for both share types.
    pub ledger_violations: usize,
    #[serde(skip)]
    pub transcripts: Vec<TranscriptRecord>,
    #[serde(skip)]
    pub final_params: Vec<f64>,
}

/// Loads or generates the configured dataset.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset, TrainingError> {
    let d = &config.data;
    let data = match d.source {
        DataSource::Synthetic => gen_synthetic_data(
            &SyntheticSpec {
                classes: d.classes,
                dim: d.dim,
                per_client: d.per_client,
                clients: config.clients.n,
                test_count: d.test_count,
                separation: d.separation,
                heterogeneity: d.heterogeneity,
            },
            derive_seed(config.seed, "data", &[]),
        )?,
        DataSource::Csv => ingest_csv_dataset(
            d.path.as_deref().expect("validated"),
            &CsvSchema {
                has_header: d.has_header,
                classes: d.classes,
                test_fraction: d.test_fraction,
            },
            config.clients.n,
            derive_seed(config.seed, "data", &[]),
        )?,
    };
    Ok(data)
}

/// Seed-deterministic Byzantine ids.
pub fn byzantine_clients(config: &ExperimentConfig) -> Vec<u32> {
    let n = config.clients.n;
    let mut ids: Vec<u32> = rand::seq::index::sample(
        &mut rng_for(config.seed, "byzantine", &[]),
        n,
        config.byzantine_count(),
    )
    .into_iter()
    .map(|i| i as u32 + 1)
    .collect();
    ids.sort_unstable();
    ids
}

struct Epoch<'a> {
    config: &'a ExperimentConfig,
    epoch: usize,
    options: RunOptions,
    records: Vec<TranscriptRecord>,
    violations: usize,
}

impl Epoch<'_> {
    fn aggregate(
        &mut self,
        stage: Stage,
        cluster: Option<usize>,
        cfg: &AggregationConfig,
        participants: &mut [Participant],
    ) -> Result<RoundTranscript, TrainingError> {
        let ids: BTreeSet<u32> = participants.iter().map(|p| p.id).collect();
        let dropouts: DropoutScript = self
            .config
            .protocol
            .dropouts
            .iter()
            .filter(|d| d.epoch == self.epoch && d.stage == stage && ids.contains(&d.client))
            .map(|d| (d.client, d.point))
            .collect();
        let t = run_aggregation(cfg, participants, &dropouts)?;
        self.violations += t.ledger_violations().len();
        self.records.push(TranscriptRecord {
            epoch: self.epoch,
            stage,
            cluster,
            contributors: t.contributors.clone(),
            rejected: t.rejected(),
            messages: if self.options.record_transcript {
                t.messages.clone()
            } else {
                Vec::new()
            },
        });
        Ok(t)
    }

    fn session(&self, stage: Stage, cluster: usize) -> AggregationConfig {
        let p = &self.config.protocol;
        AggregationConfig {
            session_seed: derive_seed(
                self.config.seed,
                "aggregation",
                &[self.epoch as u64, stage as u64, cluster as u64],
            ),
            graph: p.graph_mode(),
            threshold: p.threshold,
            checks: None,
            magnitude_bound: self.config.defense.magnitude_bound,
        }
    }
}

fn timed<T>(on: bool, f: impl FnOnce() -> T) -> (T, u64) {
    if !on {
        return (f(), 0);
    }
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_millis() as u64)
}

/// Runs the configured experiment end to end.
pub fn run_training(config: &ExperimentConfig, options: RunOptions) -> Result<TrainingReport, TrainingError> {
    config.validate()?;
    let data = load_dataset(config)?;
    let n = config.clients.n;
    let mut model = Model::new(
        config.model.architecture,
        data.dim,
        data.classes,
        config.model.hidden,
        &mut rng_for(config.seed, "model-init", &[]),
    );
    let l = model.len();
    let f = config.protocol.scale_bits;
    let byzantine = byzantine_clients(config);
    let is_byzantine = |id: u32| byzantine.binary_search(&id).is_ok();
    let q = if config.defense.enabled {
        Some(compute_q(l, config.defense.s_m_assumed, config.defense.delta)?.q)
    } else {
        None
    };

    let mut rounds = Vec::with_capacity(config.epochs);
    let mut transcripts = Vec::new();
    let mut aggregations = 0;
    let mut violations = 0;
    for epoch in 0..config.epochs {
        let e = epoch as u64;
        // local training and attacks
        let updates: Vec<(Vec<f64>, FixedVec)> = (1..=n as u32)
            .into_par_iter()
            .map(|id| -> Result<_, TrainingError> {
                let mut rng = rng_for(config.seed, "local-batch", &[id as u64, e]);
                let raw = local_step(
                    &model,
                    &data.shards[id as usize - 1],
                    config.model.learning_rate,
                    config.model.batch_size,
                    config.model.update_clip,
                    &mut rng,
                )?;
                let mut fixed = FixedVec::encode(&raw, f)?;
                if is_byzantine(id) {
                    fixed = config.attack.apply_to_update(&fixed, id, e)?;
                }
                Ok((raw, fixed))
            })
            .collect::<Result<_, _>>()?;
        let deviation = |id: u32| {
            if is_byzantine(id) {
                config.attack.deviation(id, e)
            } else {
                Deviation::Honest
            }
        };
        let make_participant = |id: u32| {
            Participant::new(
                id,
                updates[id as usize - 1].1.clone(),
                deviation(id),
                derive_seed(config.seed, "prover", &[id as u64, e]),
            )
        };

        let mut ctx = Epoch {
            config,
            epoch,
            options,
            records: Vec::new(),
            violations: 0,
        };
        let mut metrics = RoundMetrics {
            epoch,
            accuracy: 0.0,
            flagged_correctness: Vec::new(),
            flagged_robustness: Vec::new(),
            flagged_magnitude: Vec::new(),
            contributors: Vec::new(),
            agg_norm: 0.0,
            phase_ms: [0; 3],
            cluster_mean_norms: Vec::new(),
            q,
            eta: None,
            lambda: Vec::new(),
            theta: Vec::new(),
            skipped: false,
        };

        let mean_update: Option<Vec<f64>> = if config.protocol.aggregation == AggregationMode::Plaintext {
            let mut sum = vec![0.0; l];
            for (id, (raw, fixed)) in (1u32..).zip(&updates) {
                let u = if is_byzantine(id) { fixed.decode() } else { raw.clone() };
                sum.iter_mut().zip(u).for_each(|(s, v)| *s += v);
            }
            metrics.contributors = (1..=n as u32).collect();
            Some(sum.into_iter().map(|s| s / n as f64).collect())
        } else if !config.defense.enabled {
            let mut ps: Vec<Participant> = (1..=n as u32).map(make_participant).collect();
            let cfg = ctx.session(Stage::Final, 0);
            let (t, ms) = timed(options.timings, || ctx.aggregate(Stage::Final, None, &cfg, &mut ps));
            let t = t?;
            metrics.phase_ms[2] = ms;
            apply_final(&t, &mut metrics)
        } else {
            defended_round(&mut ctx, &mut metrics, q.expect("defense enabled"), l, &make_participant)?
        };

        match mean_update {
            Some(u) => {
                metrics.agg_norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                model.apply(&u);
                if model.params.iter().any(|p| !p.is_finite()) {
                    return Err(TrainingError::Divergence);
                }
            }
            None => metrics.skipped = true,
        }
        metrics.accuracy = model.accuracy(&data.test);
        aggregations += ctx.records.len();
        violations += ctx.violations;
        if options.record_transcript {
            transcripts.extend(ctx.records);
        }
        rounds.push(metrics);
    }

    Ok(TrainingReport {
        final_accuracy: rounds.last().map_or(0.0, |r| r.accuracy),
        rounds,
        byzantine,
        parameters: l,
        aggregations,
        ledger_violations: violations,
        transcripts,
        final_params: model.params,
    })
}

/// Mean update from a final aggregation, or `None` when it cannot be applied.
fn apply_final(t: &RoundTranscript, metrics: &mut RoundMetrics) -> Option<Vec<f64>> {
    metrics.flagged_correctness.extend(t.rejected());
    metrics.flagged_correctness.sort_unstable();
    metrics.flagged_correctness.dedup();
    if t.magnitude_flag {
        metrics.flagged_magnitude.extend(&t.contributors);
        return None;
    }
    if t.contributors.is_empty() {
        return None;
    }
    metrics.contributors = t.contributors.clone();
    let count = t.contributors.len() as f64;
    Some(t.aggregate.decode().into_iter().map(|v| v / count).collect())
}

fn defended_round(
    ctx: &mut Epoch<'_>,
    metrics: &mut RoundMetrics,
    q: usize,
    l: usize,
    make_participant: &(dyn Fn(u32) -> Participant + Sync),
) -> Result<Option<Vec<f64>>, TrainingError> {
    let config = ctx.config;
    let n = config.clients.n;
    let e = ctx.epoch as u64;
    let defense = &config.defense;
    let sampling_seed = derive_seed(config.seed, "sample-indices", &[e]);
    let checks = defense
        .correctness_checks
        .then_some(CheckPlan { q, sampling_seed });

    // step 1: cluster aggregation
    let start = ctx.options.timings.then(Instant::now);
    let clients: Vec<u32> = (1..=n as u32).collect();
    let plan = cluster_assign(&clients, defense.clusters, derive_seed(config.seed, "clusters", &[e]))?;
    let mut pool: BTreeMap<u32, Participant> = BTreeMap::new();
    let mut aggregates = Vec::new();
    let mut sizes = Vec::new();
    let mut offline = BTreeSet::new();
    for (j, members) in plan.clusters.iter().enumerate() {
        let mut ps: Vec<Participant> = members.iter().map(|&id| make_participant(id)).collect();
        let mut cfg = ctx.session(Stage::Cluster, j);
        cfg.checks = checks;
        let t = ctx.aggregate(Stage::Cluster, Some(j), &cfg, &mut ps)?;
        metrics.flagged_correctness.extend(t.rejected());
        let rejected: BTreeSet<u32> = t.rejected().into_iter().collect();
        for id in &t.dropped {
            if !rejected.contains(id) {
                offline.insert(*id);
            }
        }
        for d in &config.protocol.dropouts {
            if d.epoch == ctx.epoch && d.stage == Stage::Cluster && members.contains(&d.client) {
                offline.insert(d.client);
            }
        }
        if t.magnitude_flag {
            metrics.flagged_magnitude.extend(&t.contributors);
        } else if !t.contributors.is_empty() {
            aggregates.push(t.aggregate.clone());
            sizes.push(t.contributors.len());
        }
        for p in ps {
            pool.insert(p.id, p);
        }
    }
    metrics.phase_ms[0] = start.map_or(0, |s| s.elapsed().as_millis() as u64);
    if aggregates.len() < 2 {
        return Ok(None);
    }
    let means = cluster_means(&aggregates, &sizes)?;
    metrics.cluster_mean_norms = means
        .iter()
        .map(|m| m.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let eta = defense
        .eta
        .unwrap_or(defense.z * (n as f64 / defense.clusters as f64).sqrt());
    let bounds = derive_threshold(&means, eta, config.protocol.scale_bits)?;
    metrics.lambda = bounds.lambda.decode();
    metrics.theta = bounds.theta.decode();

    // step 2: robustness proofs
    let start = ctx.options.timings.then(Instant::now);
    let flagged_correctness: BTreeSet<u32> = metrics.flagged_correctness.iter().copied().collect();
    let mut candidates: Vec<Participant> = pool
        .into_values()
        .filter(|p| !flagged_correctness.contains(&p.id) && !offline.contains(&p.id))
        .collect();
    let verdicts: Vec<bool> = candidates
        .par_iter_mut()
        .map(|p| {
            let indices = sample_indices(l, q, sampling_seed, p.id).expect("q <= l");
            p.prover
                .prove_robustness(&p.update, &indices, &bounds, &p.deviation)
                .passed
        })
        .collect();
    let mut benign = Vec::new();
    for (p, ok) in candidates.into_iter().zip(verdicts) {
        if ok {
            benign.push(p);
        } else {
            metrics.flagged_robustness.push(p.id);
        }
    }
    metrics.eta = Some(tune_eta(eta, defense.phi_max, n, benign.len())?);
    metrics.phase_ms[1] = start.map_or(0, |s| s.elapsed().as_millis() as u64);

    // step 3: final aggregation over benign-marked clients
    if benign.len() < 2 {
        return Ok(None);
    }
    let start = ctx.options.timings.then(Instant::now);
    let mut cfg = ctx.session(Stage::Final, 0);
    cfg.checks = checks;
    let t = ctx.aggregate(Stage::Final, None, &cfg, &mut benign)?;
    metrics.phase_ms[2] = start.map_or(0, |s| s.elapsed().as_millis() as u64);
    Ok(apply_final(&t, metrics))
}
