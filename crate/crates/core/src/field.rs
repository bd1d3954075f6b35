//! Arithmetic in the prime field of order `p = 2^61 - 1`.
//!
//! Every protocol object (masks, shares, MACs, fixed-point updates) is a
//! vector of [`FieldElement`]s. The Mersenne modulus lets a product of two
//! reduced elements be folded back with two shifts and an add.

use std::cell::Cell;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// The field modulus, `2^61 - 1`.
pub const MODULUS: u64 = (1 << 61) - 1;

/// `floor(p / 2)`; values above this lift to negative integers.
pub const HALF_MODULUS: u64 = MODULUS / 2;

thread_local! {
    static MUL_COUNT: Cell<u64> = const { Cell::new(0) };
}

/// Number of field multiplications performed on the current thread.
///
/// Used as an operation-count instrument: take the value before and after a
/// computation on the same thread and subtract.
pub fn mul_count() -> u64 {
    MUL_COUNT.with(Cell::get)
}

/// Runs `f` and returns its result together with the number of field
/// multiplications it performed on this thread.
pub fn count_muls<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = mul_count();
    let out = f();
    (out, mul_count() - before)
}

#[inline]
fn reduce128(x: u128) -> u64 {
    // x < 2^122, fold the high bits twice
    let lo = (x as u64) & MODULUS;
    let hi = (x >> 61) as u64;
    let s = lo + (hi & MODULUS) + (hi >> 61);
    let s = (s & MODULUS) + (s >> 61);
    if s >= MODULUS {
        s - MODULUS
    } else {
        s
    }
}

/// An element of `GF(2^61 - 1)`, always stored in canonical form `[0, p)`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: Self = FieldElement(0);
    pub const ONE: Self = FieldElement(1);

    /// Reduces an arbitrary `u64` into the field.
    #[inline]
    pub const fn new(value: u64) -> Self {
        let v = (value & MODULUS) + (value >> 61);
        FieldElement(if v >= MODULUS { v - MODULUS } else { v })
    }

    /// Maps a signed integer into the field; negatives land in the upper half.
    pub fn from_i64(value: i64) -> Self {
        if value >= 0 {
            Self::new(value as u64)
        } else {
            -Self::new(value.unsigned_abs())
        }
    }

    /// Maps a signed 128-bit integer into the field.
    pub fn from_i128(value: i128) -> Self {
        let m = MODULUS as i128;
        let r = value.rem_euclid(m);
        FieldElement(r as u64)
    }

    #[inline]
    pub const fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Lifts to the signed representative in `[-p/2, p/2]`.
    ///
    /// Values `<= floor(p/2)` stay non-negative.
    pub fn lift_signed(self) -> i64 {
        if self.0 <= HALF_MODULUS {
            self.0 as i64
        } else {
            self.0 as i64 - MODULUS as i64
        }
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Self::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat; `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(self.pow(MODULUS - 2))
        }
    }

    /// Samples a uniform element.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        FieldElement(rng.random_range(0..MODULUS))
    }

    /// Samples a uniform nonzero element.
    pub fn random_nonzero<R: Rng + ?Sized>(rng: &mut R) -> Self {
        FieldElement(rng.random_range(1..MODULUS))
    }

    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }

    /// Parses a little-endian word; non-canonical words are rejected.
    pub fn from_le_bytes(bytes: [u8; 8]) -> Option<Self> {
        let v = u64::from_le_bytes(bytes);
        (v < MODULUS).then_some(FieldElement(v))
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F({})", self.0)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for FieldElement {
    fn from(v: u64) -> Self {
        Self::new(v)
    }
}

impl From<u32> for FieldElement {
    fn from(v: u32) -> Self {
        FieldElement(v as u64)
    }
}

impl Add for FieldElement {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let s = self.0 + rhs.0;
        FieldElement(if s >= MODULUS { s - MODULUS } else { s })
    }
}

impl Sub for FieldElement {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        if self.0 >= rhs.0 {
            FieldElement(self.0 - rhs.0)
        } else {
            FieldElement(self.0 + MODULUS - rhs.0)
        }
    }
}

impl Neg for FieldElement {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        if self.0 == 0 {
            self
        } else {
            FieldElement(MODULUS - self.0)
        }
    }
}

impl Mul for FieldElement {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        MUL_COUNT.with(|c| c.set(c.get() + 1));
        FieldElement(reduce128(self.0 as u128 * rhs.0 as u128))
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for FieldElement {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl Sum for FieldElement {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a FieldElement> for FieldElement {
    fn sum<I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        iter.copied().sum()
    }
}

/// The operations secret sharing needs from a prime field.
///
/// Implemented by [`FieldElement`]; tests also implement it for tiny fields
/// so that properties can be checked by exhaustive enumeration.
pub trait PrimeField:
    Copy
    + Eq
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(v: u64) -> Self;
    fn inv(self) -> Option<Self>;
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl PrimeField for FieldElement {
    fn zero() -> Self {
        Self::ZERO
    }
    fn one() -> Self {
        Self::ONE
    }
    fn from_u64(v: u64) -> Self {
        Self::new(v)
    }
    fn inv(self) -> Option<Self> {
        self.inverse()
    }
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::random(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn naive_mul(a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % MODULUS as u128) as u64
    }

    #[test]
    fn reduction_matches_u128_modulo() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let a = FieldElement::random(&mut rng);
            let b = FieldElement::random(&mut rng);
            assert_eq!((a * b).value(), naive_mul(a.value(), b.value()));
        }
        let max = FieldElement::new(MODULUS - 1);
        assert_eq!((max * max).value(), naive_mul(MODULUS - 1, MODULUS - 1));
    }

    #[test]
    fn new_reduces_any_u64() {
        assert_eq!(FieldElement::new(MODULUS).value(), 0);
        assert_eq!(FieldElement::new(MODULUS + 5).value(), 5);
        assert_eq!(FieldElement::new(u64::MAX).value(), u64::MAX % MODULUS);
    }

    #[test]
    fn field_axioms_on_random_triples() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a = FieldElement::random(&mut rng);
            let b = FieldElement::random(&mut rng);
            let c = FieldElement::random(&mut rng);
            assert_eq!((a + b) + c, a + (b + c));
            assert_eq!((a * b) * c, a * (b * c));
            assert_eq!(a + b, b + a);
            assert_eq!(a * b, b * a);
            assert_eq!(a * (b + c), a * b + a * c);
            assert_eq!(a + FieldElement::ZERO, a);
            assert_eq!(a * FieldElement::ONE, a);
            assert_eq!(a + (-a), FieldElement::ZERO);
            assert_eq!(a - b, a + (-b));
            if !a.is_zero() {
                assert_eq!(a * a.inverse().unwrap(), FieldElement::ONE);
            }
        }
        assert!(FieldElement::ZERO.inverse().is_none());
    }

    #[test]
    fn lift_signed_examples() {
        assert_eq!(FieldElement::new(5).lift_signed(), 5);
        assert_eq!(FieldElement::new(MODULUS - 3).lift_signed(), -3);
        assert_eq!(
            FieldElement::new(HALF_MODULUS).lift_signed(),
            HALF_MODULUS as i64
        );
        assert_eq!(
            FieldElement::new(HALF_MODULUS + 1).lift_signed(),
            -(HALF_MODULUS as i64)
        );
    }

    #[test]
    fn signed_round_trip() {
        for v in [-1_000_000_007i64, -1, 0, 1, 42, HALF_MODULUS as i64] {
            assert_eq!(FieldElement::from_i64(v).lift_signed(), v);
            assert_eq!(
                FieldElement::from_i128(v as i128),
                FieldElement::from_i64(v)
            );
        }
    }

    #[test]
    fn mul_counter_tracks_products() {
        let a = FieldElement::new(3);
        let (_, n) = count_muls(|| a * a * a);
        assert_eq!(n, 2);
    }

    #[test]
    fn le_bytes_reject_non_canonical() {
        assert_eq!(
            FieldElement::from_le_bytes(FieldElement::new(9).to_le_bytes()),
            Some(FieldElement::new(9))
        );
        assert_eq!(FieldElement::from_le_bytes(MODULUS.to_le_bytes()), None);
    }
}
