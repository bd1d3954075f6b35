use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::FieldElement;

/// A mask seed: the individual seed `b_i` or a pairwise seed `a_{i,j}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub FieldElement);

impl Seed {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Seed(FieldElement::random(rng))
    }
}

/// Evaluates the mask generator at coordinate `k`: `(seed + k + 1)^5`.
///
/// Indexable and algebraic, so the correctness circuit can re-evaluate a
/// single coordinate with three multiplication gates.
#[inline]
pub fn prg_eval(seed: Seed, k: usize) -> FieldElement {
    let x = seed.0 + FieldElement::new(k as u64 + 1);
    let x2 = x * x;
    let x4 = x2 * x2;
    x4 * x
}

/// Expands a seed into a mask of length `len`.
pub fn prg_expand(seed: Seed, len: usize) -> Vec<FieldElement> {
    (0..len).map(|k| prg_eval(seed, k)).collect()
}
