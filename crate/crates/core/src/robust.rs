//! Median-of-means robustness bounds and the per-client check budget.
//!
//! The server clusters clients at random, learns each cluster's mean through
//! secure aggregation, and takes the coordinate-wise median `lambda` of those
//! means as a robust center. Cluster means of `n_c` i.i.d. updates have
//! standard deviation `sigma / sqrt(n_c)`, so a threshold
//! `theta = eta * sigma_mu` with `eta = z * sqrt(n_c)` sits `z` raw standard
//! deviations away from the center.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::{FixedVec, NumericError};
use crate::seed::rng_for;

/// Default `z` in `eta = z * sqrt(n_c)`.
pub const DEFAULT_Z: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RobustnessError {
    #[error("cannot form {clusters} clusters from {clients} clients")]
    TooManyClusters { clusters: usize, clients: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("need at least 2 cluster means, got {0}")]
    InsufficientClusters(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("tampering fraction 0 cannot be detected by sampling")]
    Undetectable,
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// A balanced random partition of clients into clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPlan {
    /// Client ids per cluster, each sorted ascending.
    pub clusters: Vec<Vec<u32>>,
}

impl ClusterPlan {
    pub fn count(&self) -> usize {
        self.clusters.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    pub fn cluster_of(&self, client: u32) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&client))
    }
}

/// Randomly partitions `clients` into `c` clusters whose sizes differ by at most one.
pub fn cluster_assign(
    clients: &[u32],
    c: usize,
    seed: u64,
) -> Result<ClusterPlan, RobustnessError> {
    if c == 0 || c > clients.len() {
        return Err(RobustnessError::TooManyClusters {
            clusters: c,
            clients: clients.len(),
        });
    }
    let mut shuffled = clients.to_vec();
    shuffled.shuffle(&mut rng_for(seed, "cluster-assign", &[]));
    let mut clusters = vec![Vec::new(); c];
    for (i, id) in shuffled.into_iter().enumerate() {
        clusters[i % c].push(id);
    }
    for cluster in &mut clusters {
        cluster.sort_unstable();
    }
    Ok(ClusterPlan { clusters })
}

/// Per-cluster means `mu_j = decode(alpha_j) / n_j` in the real domain.
pub fn cluster_means(
    aggregates: &[FixedVec],
    sizes: &[usize],
) -> Result<Vec<Vec<f64>>, RobustnessError> {
    if aggregates.len() != sizes.len() {
        return Err(RobustnessError::InvalidParameter(format!(
            "{} aggregates for {} cluster sizes",
            aggregates.len(),
            sizes.len()
        )));
    }
    aggregates
        .iter()
        .zip(sizes)
        .enumerate()
        .map(|(j, (agg, &n))| {
            if n == 0 {
                return Err(RobustnessError::EmptyCluster(j));
            }
            Ok(agg.decode().into_iter().map(|x| x / n as f64).collect())
        })
        .collect()
}

/// Coordinate-wise median; for an even count, the lower of the two middle values.
pub fn median_of_means(means: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = means.first() else {
        return Vec::new();
    };
    let mut column = Vec::with_capacity(means.len());
    (0..first.len())
        .map(|k| {
            column.clear();
            column.extend(means.iter().map(|m| m[k]));
            column.sort_unstable_by(f64::total_cmp);
            column[(column.len() - 1) / 2]
        })
        .collect()
}

/// Coordinate-wise sample standard deviation (divisor `c - 1`).
pub fn std_of_means(means: &[Vec<f64>]) -> Vec<f64> {
    let c = means.len() as f64;
    let l = means.first().map_or(0, Vec::len);
    (0..l)
        .map(|k| {
            let mean = means.iter().map(|m| m[k]).sum::<f64>() / c;
            let ss = means.iter().map(|m| (m[k] - mean).powi(2)).sum::<f64>();
            (ss / (c - 1.0)).sqrt()
        })
        .collect()
}

/// `eta = z * sqrt(n_c)`.
pub fn default_eta(cluster_size: f64) -> f64 {
    DEFAULT_Z * cluster_size.sqrt()
}

/// Smallest threshold, `2^(2-f)`: four quantization units.
pub fn theta_floor(scale_bits: u32) -> f64 {
    4.0 / (1u64 << scale_bits) as f64
}

/// Public robustness bounds for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessBounds {
    pub lambda: FixedVec,
    pub theta: FixedVec,
    pub eta: f64,
    pub sigma_mu: FixedVec,
}

impl RobustnessBounds {
    /// Plaintext form of the check the robustness circuit proves.
    pub fn admits(&self, k: usize, u: crate::field::FieldElement) -> bool {
        let d = (u - self.lambda.coords[k]).lift_signed().abs();
        d < self.theta.coords[k].lift_signed()
    }
}

/// Derives `lambda` (median of means) and `theta = max(eta * sigma_mu, floor)`.
pub fn derive_threshold(
    means: &[Vec<f64>],
    eta: f64,
    scale_bits: u32,
) -> Result<RobustnessBounds, RobustnessError> {
    if means.len() < 2 {
        return Err(RobustnessError::InsufficientClusters(means.len()));
    }
    if !(eta > 0.0) {
        return Err(RobustnessError::InvalidParameter(format!(
            "eta must be positive, got {eta}"
        )));
    }
    let l = means[0].len();
    if means.iter().any(|m| m.len() != l) {
        return Err(RobustnessError::InvalidParameter(
            "cluster means differ in length".into(),
        ));
    }
    let lambda = median_of_means(means);
    let sigma = std_of_means(means);
    let floor = theta_floor(scale_bits);
    let theta: Vec<f64> = sigma.iter().map(|s| (eta * s).max(floor)).collect();
    Ok(RobustnessBounds {
        lambda: FixedVec::encode(&lambda, scale_bits)?,
        theta: FixedVec::encode(&theta, scale_bits)?,
        eta,
        sigma_mu: FixedVec::encode(&sigma, scale_bits)?,
    })
}

/// Post-hoc check of the benign-count bound `(1 - phi_max) * n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaReport {
    pub eta: f64,
    pub benign_bound: f64,
    /// Set when more clients passed than the bound allows.
    pub flagged: bool,
}

/// Keeps `eta` fixed and reports whether the benign-marked count exceeded
/// `(1 - phi_max) * n`; no iterative adjustment is made.
pub fn tune_eta(
    eta: f64,
    phi_max: f64,
    n: usize,
    passed: usize,
) -> Result<EtaReport, RobustnessError> {
    if !(0.0..1.0).contains(&phi_max) {
        return Err(RobustnessError::InvalidParameter(format!(
            "phi_max must lie in [0, 1), got {phi_max}"
        )));
    }
    let benign_bound = (1.0 - phi_max) * n as f64;
    Ok(EtaReport {
        eta,
        benign_bound,
        flagged: passed as f64 > benign_bound,
    })
}

/// Number of per-client sampled checks and the assumptions behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckBudget {
    pub q: usize,
    pub delta: f64,
    pub tampered_fraction: f64,
    pub l: usize,
    /// Detection probability at `q`.
    pub probability: f64,
}

/// Probability that `q` distinct uniform indices out of `l` hit at least one
/// of the `l * s_m` tampered ones: `1 - C(l(1-s_m), q) / C(l, q)`.
pub fn detection_probability(l: usize, s_m: f64, q: usize) -> f64 {
    let clean = l as f64 * (1.0 - s_m);
    let mut miss = 1.0;
    for i in 0..q.min(l) {
        let num = clean - i as f64;
        if num <= 0.0 {
            return 1.0;
        }
        miss *= num / (l - i) as f64;
    }
    1.0 - miss
}

/// Minimal `q` with detection probability above `1 - delta`, capped at `l`.
pub fn compute_q(l: usize, s_m: f64, delta: f64) -> Result<CheckBudget, RobustnessError> {
    if l == 0 {
        return Err(RobustnessError::InvalidParameter(
            "l must be at least 1".into(),
        ));
    }
    if s_m == 0.0 {
        return Err(RobustnessError::Undetectable);
    }
    if !(s_m > 0.0 && s_m <= 1.0) {
        return Err(RobustnessError::InvalidParameter(format!(
            "tampered fraction must lie in (0, 1], got {s_m}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(RobustnessError::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let target = 1.0 - delta;
    let clean = l as f64 * (1.0 - s_m);
    let mut miss = 1.0;
    let mut q = l;
    for i in 0..l {
        let num = clean - i as f64;
        miss = if num <= 0.0 {
            0.0
        } else {
            miss * num / (l - i) as f64
        };
        if 1.0 - miss > target {
            q = i + 1;
            break;
        }
    }
    Ok(CheckBudget {
        q,
        delta,
        tampered_fraction: s_m,
        l,
        probability: detection_probability(l, s_m, q),
    })
}

/// `q` distinct uniform indices in `[0, l)` for `client`, sorted ascending.
pub fn sample_indices(
    l: usize,
    q: usize,
    seed: u64,
    client: u32,
) -> Result<Vec<usize>, RobustnessError> {
    if q > l {
        return Err(RobustnessError::InvalidParameter(format!(
            "cannot sample {q} indices out of {l}"
        )));
    }
    let mut rng = rng_for(seed, "sample-indices", &[client as u64]);
    let mut out = index::sample(&mut rng, l, q).into_vec();
    out.sort_unstable();
    Ok(out)
}
