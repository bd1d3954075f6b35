//! Seeds, the indexable mask generator, Diffie-Hellman key agreement and
//! Shamir secret sharing.

mod dh;
mod prg;
mod shamir;

pub use dh::{key_agree, GroupElement, KeyPair, GENERATOR, GROUP_MODULUS, GROUP_ORDER};
pub use prg::{prg_eval, prg_expand, Seed};
pub use shamir::{shamir_reconstruct, shamir_share, shamir_share_with_coefficients, ShamirShare};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid public key")]
    InvalidKey,
    #[error("invalid sharing parameters: threshold {threshold}, {recipients} recipients")]
    BadThreshold { threshold: usize, recipients: usize },
    #[error("share indices must be distinct and nonzero")]
    MalformedShares,
    #[error("need {needed} shares, got {got}")]
    InsufficientShares { needed: usize, got: usize },
}
