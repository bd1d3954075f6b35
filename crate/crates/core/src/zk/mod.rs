//! Zero-knowledge checks over information-theoretic MACs.
//!
//! A value `x` held by the prover is authenticated as `M[x] = K[x] + delta * x`
//! with the verifier holding `K[x]` and `delta`. Linear combinations open for
//! free; products are proven by sacrificing dealer triples; range checks use
//! bit decomposition. The two protocol circuits (mask correctness and
//! robustness) are built from these pieces.

mod circuits;
mod lin;
mod session;
mod transcript;

pub use circuits::{
    correctness_circuit, range_bits, robustness_circuit, CorrectnessInput, PairwiseSeed,
    RobustnessInput,
};
pub use lin::Lin;
pub use session::{AuthValue, Opening, ZkSession};
pub use transcript::ZkTranscript;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ZkError {
    #[error("dealer randomness exhausted")]
    DealerExhausted,
    #[error("opening rejected: MAC does not verify")]
    Forgery,
    #[error("opened value is not zero")]
    NotZero,
    #[error("multiplication check failed")]
    MultCheckFailed,
    #[error("range check failed")]
    RangeFailed,
    #[error("malformed transcript")]
    MalformedTranscript,
}

/// Correlated randomness the dealer hands out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DealerBudget {
    pub authentications: usize,
    pub triples: usize,
}

impl DealerBudget {
    /// Material for one correctness proof over `indices` sampled coordinates
    /// with `neighbors` pairwise seeds: the seeds, the sampled update
    /// coordinates, and three multiplications per mask evaluation.
    pub fn correctness(indices: usize, neighbors: usize) -> Self {
        let prg_evals = indices * (neighbors + 1);
        DealerBudget {
            authentications: (neighbors + 1) + indices + 3 * prg_evals,
            triples: 3 * prg_evals,
        }
    }

    /// Material for range proofs on `indices` coordinates with bounds of at
    /// most `bits` bits: two decompositions per coordinate.
    pub fn robustness(indices: usize, bits: usize) -> Self {
        DealerBudget {
            authentications: 2 * bits * indices,
            triples: 2 * bits * indices,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Circuit {
    Correctness,
    Robustness,
}

/// Which check failed, and where.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedCheck {
    pub circuit: Circuit,
    /// Model coordinate being checked, when the failure is tied to one.
    pub index: Option<usize>,
    pub reason: String,
}

/// Outcome of a circuit: `passed` iff every opened check verified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofVerdict {
    pub passed: bool,
    pub failed_check: Option<FailedCheck>,
}

impl ProofVerdict {
    pub fn pass() -> Self {
        ProofVerdict {
            passed: true,
            failed_check: None,
        }
    }

    pub fn fail(circuit: Circuit, index: Option<usize>, err: ZkError) -> Self {
        ProofVerdict {
            passed: false,
            failed_check: Some(FailedCheck {
                circuit,
                index,
                reason: err.to_string(),
            }),
        }
    }
}
