//! The two per-client circuits: masked-update correctness and robustness.

use super::{AuthValue, Circuit, Lin, ProofVerdict, ZkError, ZkSession};
use crate::field::FieldElement;

/// An authenticated pairwise seed shared with `neighbor`.
#[derive(Debug, Clone, Copy)]
pub struct PairwiseSeed {
    pub neighbor: u32,
    pub seed: AuthValue,
}

pub struct CorrectnessInput<'a> {
    /// Global index of the proving client, used for the mask sign convention.
    pub client: u32,
    pub individual_seed: AuthValue,
    pub pairwise: &'a [PairwiseSeed],
    /// Authenticated update coordinates `(k, u^k)` at the sampled indices.
    pub update: &'a [(usize, AuthValue)],
    /// The public masked update the client sent.
    pub masked: &'a [FieldElement],
}

/// Re-evaluates `(seed + k + 1)^5` on an authenticated seed: three proven products.
fn prg_in_circuit(
    session: &mut ZkSession,
    seed: AuthValue,
    k: usize,
) -> Result<AuthValue, ZkError> {
    let x = Lin::from(seed) + FieldElement::new(k as u64 + 1);
    let x2 = Lin::from(session.mul(&x, &x)?);
    let x4 = Lin::from(session.mul(&x2, &x2)?);
    session.mul(&x4, &x)
}

/// Checks, for every sampled coordinate, that the public masked value equals
/// the update plus the masks regenerated in-circuit from the authenticated seeds.
pub fn correctness_circuit(session: &mut ZkSession, input: &CorrectnessInput<'_>) -> ProofVerdict {
    for &(k, u) in input.update {
        let mut check = || -> Result<(), ZkError> {
            let Some(&public) = input.masked.get(k) else {
                return Err(ZkError::NotZero);
            };
            let r = prg_in_circuit(session, input.individual_seed, k)?;
            let mut v_hat = Lin::from(u) + Lin::from(r);
            for p in input.pairwise {
                let m = Lin::from(prg_in_circuit(session, p.seed, k)?);
                v_hat = if p.neighbor < input.client {
                    v_hat - m
                } else {
                    v_hat + m
                };
            }
            session.check_zero(&(v_hat - public))
        };
        if let Err(e) = check() {
            return ProofVerdict::fail(Circuit::Correctness, Some(k), e);
        }
    }
    ProofVerdict::pass()
}

pub struct RobustnessInput<'a> {
    /// Authenticated update coordinates `(k, u^k)` at the sampled indices.
    pub update: &'a [(usize, AuthValue)],
    /// Public median `lambda`, full length, fixed-point encoded.
    pub lambda: &'a [FieldElement],
    /// Public threshold `theta`, full length, fixed-point encoded and positive.
    pub theta: &'a [FieldElement],
}

/// Checks `|u^k - lambda^k| < theta^k` at every sampled coordinate.
///
/// Over field integers the strict bound is `|u - lambda| <= theta - 1`,
/// proven as `0 <= u - lambda + theta - 1 <= 2 theta - 2`.
pub fn robustness_circuit(session: &mut ZkSession, input: &RobustnessInput<'_>) -> ProofVerdict {
    for &(k, u) in input.update {
        let (Some(&lambda), Some(&theta)) = (input.lambda.get(k), input.theta.get(k)) else {
            return ProofVerdict::fail(Circuit::Robustness, Some(k), ZkError::RangeFailed);
        };
        let theta_int = theta.lift_signed();
        if theta_int <= 0 {
            return ProofVerdict::fail(Circuit::Robustness, Some(k), ZkError::RangeFailed);
        }
        let d = Lin::from(u) - lambda + FieldElement::new(theta_int as u64 - 1);
        let bound = 2 * theta_int as u64 - 2;
        if let Err(e) = session.range_proof(&d, bound) {
            return ProofVerdict::fail(Circuit::Robustness, Some(k), e);
        }
    }
    ProofVerdict::pass()
}

/// Bit length of the largest range-proof bound used for `theta`.
pub fn range_bits(theta: &[FieldElement]) -> usize {
    theta
        .iter()
        .map(|t| {
            let b = (2 * t.lift_signed().max(1) as u64).saturating_sub(2);
            64 - b.leading_zeros() as usize
        })
        .max()
        .unwrap_or(0)
}
