use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CryptoError, Seed};
use crate::field::FieldElement;

/// Safe prime `P = 2Q + 1` defining the key-agreement group.
pub const GROUP_MODULUS: u64 = 9_223_372_036_854_771_239;
/// Prime order `Q` of the quadratic-residue subgroup.
pub const GROUP_ORDER: u64 = (GROUP_MODULUS - 1) / 2;
/// Generator of the order-`Q` subgroup (4 = 2^2 is a quadratic residue).
pub const GENERATOR: u64 = 4;

fn mulmod(a: u64, b: u64) -> u64 {
    (a as u128 * b as u128 % GROUP_MODULUS as u128) as u64
}

fn powmod(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    base %= GROUP_MODULUS;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod(acc, base);
        }
        base = mulmod(base, base);
        exp >>= 1;
    }
    acc
}

/// An element of the key-agreement group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(pub u64);

impl GroupElement {
    pub fn generator() -> Self {
        GroupElement(GENERATOR)
    }

    /// Membership in the order-`Q` subgroup, excluding the identity.
    pub fn is_valid_public_key(self) -> bool {
        self.0 > 1 && self.0 < GROUP_MODULUS && powmod(self.0, GROUP_ORDER) == 1
    }

    pub fn pow(self, exp: FieldElement) -> Self {
        GroupElement(powmod(self.0, exp.value()))
    }

    /// Reduces the group element into the field.
    pub fn to_field(self) -> FieldElement {
        FieldElement::new(self.0)
    }
}

/// A Diffie-Hellman key pair `(sk, g^sk)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyPair {
    pub sk: FieldElement,
    pub pk: GroupElement,
}

impl KeyPair {
    /// Every nonzero field element is a valid exponent since `p < Q`.
    pub fn from_secret(sk: FieldElement) -> Option<Self> {
        if sk.is_zero() {
            return None;
        }
        Some(KeyPair {
            sk,
            pk: GroupElement::generator().pow(sk),
        })
    }

    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_secret(FieldElement::random_nonzero(rng)).expect("nonzero secret")
    }
}

/// Derives the pairwise seed `reduce(pk_j^sk_i)`; symmetric in the two parties.
pub fn key_agree(sk: FieldElement, peer_pk: GroupElement) -> Result<Seed, CryptoError> {
    if !peer_pk.is_valid_public_key() {
        return Err(CryptoError::InvalidKey);
    }
    Ok(Seed(peer_pk.pow(sk).to_field()))
}
