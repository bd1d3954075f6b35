//! Byzantine behaviors: corrupted updates and deviations from the protocol.
//!
//! Update attacks (`sign_flip`, `scaling`, `non_omniscient`) rewrite a chosen
//! fraction of a client's update before it enters the protocol. Protocol
//! deviations ([`Deviation`]) each override exactly one client step and leave
//! the rest of the client state machine untouched.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::{fp_encode, FixedVec, NumericError};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid attack parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    SignFlip,
    Scaling,
    NonOmniscient,
    InconsistentUpdate,
    WrongMaskedCompute,
    WrongSeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Fraction of coordinates attacked.
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_kappa() -> f64 {
    1.0
}

fn default_fraction() -> f64 {
    1.0
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            kind: AttackKind::None,
            kappa: default_kappa(),
            fraction: default_fraction(),
            seed: 0,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.kind == AttackKind::None {
            return Ok(());
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(AttackError::InvalidParameter(format!(
                "fraction must lie in (0, 1], got {}",
                self.fraction
            )));
        }
        let kappa_ok = match self.kind {
            AttackKind::NonOmniscient => self.kappa >= 0.0,
            AttackKind::SignFlip | AttackKind::Scaling => self.kappa > 0.0,
            _ => true,
        };
        if !kappa_ok || !self.kappa.is_finite() {
            return Err(AttackError::InvalidParameter(format!(
                "kappa out of range: {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Applies an update attack for `client` in `round`; protocol deviations
    /// and `None` leave the update unchanged.
    pub fn apply_to_update(&self, u: &FixedVec, client: u32, round: u64) -> Result<FixedVec, AttackError> {
        let seed = crate::seed::derive_seed(self.seed, "attack-coords", &[client as u64, round]);
        match self.kind {
            AttackKind::SignFlip => attack_sign_flip(u, self.kappa, self.fraction, seed),
            AttackKind::Scaling => attack_scale(u, self.kappa, self.fraction, seed),
            AttackKind::NonOmniscient => attack_non_omniscient(u, self.kappa, self.fraction, seed),
            _ => Ok(u.clone()),
        }
    }

    /// The protocol deviation this spec induces for `client` in `round`.
    pub fn deviation(&self, client: u32, round: u64) -> Deviation {
        let seed = crate::seed::derive_seed(self.seed, "deviation", &[client as u64, round]);
        match self.kind {
            AttackKind::WrongMaskedCompute => Deviation::WrongMaskedCompute {
                fraction: self.fraction,
                seed,
            },
            AttackKind::InconsistentUpdate => Deviation::InconsistentUpdate,
            AttackKind::WrongSeed => Deviation::WrongSeed { seed },
            _ => Deviation::Honest,
        }
    }
}

/// The attacked coordinate set: `round(fraction * l)` indices (at least one).
pub fn attacked_coordinates(l: usize, fraction: f64, seed: u64) -> Vec<usize> {
    if l == 0 {
        return Vec::new();
    }
    let count = ((fraction * l as f64).round() as usize).clamp(1, l);
    let mut out = index::sample(&mut rng_for(seed, "attacked-coordinates", &[]), l, count).into_vec();
    out.sort_unstable();
    out
}

fn rewrite(
    u: &FixedVec,
    fraction: f64,
    seed: u64,
    f: impl Fn(f64) -> f64,
) -> Result<FixedVec, AttackError> {
    let mut out = u.clone();
    let values = u.decode();
    for k in attacked_coordinates(u.len(), fraction, seed) {
        out.coords[k] = fp_encode(f(values[k]), u.scale_bits)?;
    }
    Ok(out)
}

/// `u <- -kappa * u` on the attacked coordinates.
pub fn attack_sign_flip(u: &FixedVec, kappa: f64, fraction: f64, seed: u64) -> Result<FixedVec, AttackError> {
    rewrite(u, fraction, seed, |x| -kappa * x)
}

/// `u <- kappa * u` on the attacked coordinates.
pub fn attack_scale(u: &FixedVec, kappa: f64, fraction: f64, seed: u64) -> Result<FixedVec, AttackError> {
    rewrite(u, fraction, seed, |x| kappa * x)
}

/// `u <- mu - kappa * sigma` on the attacked coordinates, with `mu` and
/// `sigma` the mean and sample standard deviation of the client's own update.
pub fn attack_non_omniscient(
    u: &FixedVec,
    kappa: f64,
    fraction: f64,
    seed: u64,
) -> Result<FixedVec, AttackError> {
    if u.len() < 2 {
        return Err(AttackError::InvalidParameter(
            "non-omniscient attack needs at least two coordinates".into(),
        ));
    }
    let values = u.decode();
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let sigma = (values.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let target = mu - kappa * sigma;
    rewrite(u, fraction, seed, |_| target)
}

/// A client-side protocol deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Deviation {
    #[default]
    Honest,
    /// Perturbs a fraction of the masked update after honest masking.
    WrongMaskedCompute { fraction: f64, seed: u64 },
    /// Presents a different update to the robustness check than the one it
    /// authenticated.
    InconsistentUpdate,
    /// Masks with a seed other than the one it secret-shared.
    WrongSeed { seed: u64 },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FixedVec {
        FixedVec::encode(v, 16).unwrap()
    }

    #[test]
    fn sign_flip_examples() {
        let u = fv(&[0.2]);
        let out = attack_sign_flip(&u, 5.0, 1.0, 0).unwrap().decode();
        assert!((out[0] + 1.0).abs() <= 5.0 / 65536.0);
        let u = fv(&[0.25, -1.5, 0.0, 3.0]);
        assert_eq!(attack_sign_flip(&u, 1.0, 1.0, 9).unwrap(), fv(&[-0.25, 1.5, 0.0, -3.0]));
    }

    #[test]
    fn sign_flip_is_an_involution_at_unit_kappa() {
        let u = fv(&[0.1, -0.7, 0.33, 12.5, -0.0001]);
        let twice = attack_sign_flip(&attack_sign_flip(&u, 1.0, 1.0, 3).unwrap(), 1.0, 1.0, 3).unwrap();
        assert_eq!(twice, u);
    }

    #[test]
    fn scaling_examples() {
        let out = attack_scale(&fv(&[0.2]), 10.0, 1.0, 0).unwrap().decode();
        assert!((out[0] - 2.0).abs() <= 10.0 / 65536.0);
        let u = fv(&[0.2, -4.0, 7.75]);
        assert_eq!(attack_scale(&u, 1.0, 1.0, 0).unwrap(), u);
        let big = fv(&[1.0e12]);
        assert!(matches!(
            attack_scale(&big, 1.0e9, 1.0, 0),
            Err(AttackError::Numeric(NumericError::EncodingOverflow { .. }))
        ));
    }

    #[test]
    fn non_omniscient_examples() {
        // mu = 0.1, sample sigma = 0.05
        let u = fv(&[0.05, 0.1, 0.15]);
        let out = attack_non_omniscient(&u, 1.5, 1.0, 0).unwrap().decode();
        let expected = fp_encode(0.025, 16).map(|e| crate::fixed::fp_decode(e, 16)).unwrap();
        for x in out {
            assert!((x - expected).abs() <= 1.0 / 65536.0);
        }
        let at_mu = attack_non_omniscient(&u, 0.0, 1.0, 0).unwrap().decode();
        assert!(at_mu.iter().all(|x| (x - 0.1).abs() <= 1.0 / 65536.0));
        let flat = fv(&[0.5; 4]);
        assert_eq!(attack_non_omniscient(&flat, 3.0, 1.0, 0).unwrap(), flat);
        assert!(attack_non_omniscient(&fv(&[1.0]), 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn partial_attacks_touch_only_chosen_coordinates() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let u = fv(&values);
        let out = attack_sign_flip(&u, 5.0, 0.3, 42).unwrap();
        let chosen = attacked_coordinates(100, 0.3, 42);
        assert_eq!(chosen.len(), 30);
        for k in 0..100 {
            if chosen.contains(&k) {
                assert_ne!(out.coords[k], u.coords[k]);
            } else {
                assert_eq!(out.coords[k], u.coords[k]);
            }
        }
        assert_eq!(out, attack_sign_flip(&u, 5.0, 0.3, 42).unwrap());
    }

    #[test]
    fn spec_dispatch_and_validation() {
        let u = fv(&[0.25, 0.5]);
        let none = AttackSpec::default();
        assert_eq!(none.apply_to_update(&u, 1, 0).unwrap(), u);
        assert_eq!(none.deviation(1, 0), Deviation::Honest);
        let flip = AttackSpec {
            kind: AttackKind::SignFlip,
            kappa: 5.0,
            fraction: 1.0,
            seed: 1,
        };
        assert_eq!(flip.apply_to_update(&u, 1, 0).unwrap(), fv(&[-1.25, -2.5]));
        let seed_attack = AttackSpec {
            kind: AttackKind::WrongSeed,
            ..AttackSpec::default()
        };
        assert!(matches!(seed_attack.deviation(3, 1), Deviation::WrongSeed { .. }));
        assert_eq!(seed_attack.apply_to_update(&u, 3, 1).unwrap(), u);
        assert!(AttackSpec { kappa: 0.0, ..flip }.validate().is_err());
        assert!(AttackSpec { fraction: 0.0, ..flip }.validate().is_err());
        assert!(flip.validate().is_ok());
    }
}
