//! Signed fixed-point encoding of real-valued model updates into the field.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldElement, HALF_MODULUS};

/// Default number of fractional bits.
pub const DEFAULT_SCALE_BITS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("value {value} does not fit the fixed-point range at {scale_bits} fractional bits")]
    EncodingOverflow { value: f64, scale_bits: u32 },
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("scale mismatch: {left} vs {right} fractional bits")]
    ScaleMismatch { left: u32, right: u32 },
}

/// Largest magnitude (in real units) that encodes without overflow.
pub fn max_encodable(scale_bits: u32) -> f64 {
    HALF_MODULUS as f64 / (1u64 << scale_bits) as f64
}

/// Encodes `x` as `round(x * 2^f) mod p`, rounding half away from zero.
pub fn fp_encode(x: f64, scale_bits: u32) -> Result<FieldElement, NumericError> {
    let scaled = (x * (1u64 << scale_bits) as f64).round();
    // strictly inside (-p/2, p/2); f64 rounding near the edge errs on rejecting
    if !scaled.is_finite() || scaled.abs() >= HALF_MODULUS as f64 {
        return Err(NumericError::EncodingOverflow {
            value: x,
            scale_bits,
        });
    }
    Ok(FieldElement::from_i64(scaled as i64))
}

/// Decodes through the signed lift: `lift_signed(e) / 2^f`.
pub fn fp_decode(e: FieldElement, scale_bits: u32) -> f64 {
    e.lift_signed() as f64 / (1u64 << scale_bits) as f64
}

/// A vector of fixed-point field elements sharing one scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedVec {
    pub coords: Vec<FieldElement>,
    pub scale_bits: u32,
}

impl FixedVec {
    pub fn zeros(len: usize, scale_bits: u32) -> Self {
        FixedVec {
            coords: vec![FieldElement::ZERO; len],
            scale_bits,
        }
    }

    pub fn from_coords(coords: Vec<FieldElement>, scale_bits: u32) -> Self {
        FixedVec { coords, scale_bits }
    }

    pub fn encode(values: &[f64], scale_bits: u32) -> Result<Self, NumericError> {
        let coords = values
            .iter()
            .map(|&x| fp_encode(x, scale_bits))
            .collect::<Result<_, _>>()?;
        Ok(FixedVec { coords, scale_bits })
    }

    pub fn decode(&self) -> Vec<f64> {
        self.coords
            .iter()
            .map(|&e| fp_decode(e, self.scale_bits))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    fn check_compatible(&self, other: &FixedVec) -> Result<(), NumericError> {
        if self.len() != other.len() {
            return Err(NumericError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        if self.scale_bits != other.scale_bits {
            return Err(NumericError::ScaleMismatch {
                left: self.scale_bits,
                right: other.scale_bits,
            });
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &FixedVec) -> Result<(), NumericError> {
        self.check_compatible(other)?;
        for (a, &b) in self.coords.iter_mut().zip(&other.coords) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &FixedVec) -> Result<(), NumericError> {
        self.check_compatible(other)?;
        for (a, &b) in self.coords.iter_mut().zip(&other.coords) {
            *a -= b;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MODULUS;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn encode_examples() {
        assert_eq!(fp_encode(0.0, 16).unwrap(), FieldElement::ZERO);
        assert_eq!(fp_encode(1.0, 16).unwrap().value(), 65536);
        assert_eq!(fp_encode(-1.0, 16).unwrap().value(), MODULUS - 65536);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(fp_decode(FieldElement::ZERO, 16), 0.0);
        assert_eq!(fp_decode(FieldElement::new(65536), 16), 1.0);
        assert_eq!(fp_decode(FieldElement::new(MODULUS - 32768), 16), -0.5);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let half_unit = 0.5 / 65536.0;
        assert_eq!(fp_encode(half_unit, 16).unwrap().lift_signed(), 1);
        assert_eq!(fp_encode(-half_unit, 16).unwrap().lift_signed(), -1);
    }

    #[test]
    fn overflow_is_reported() {
        let too_big = max_encodable(16) * 2.0;
        assert!(matches!(
            fp_encode(too_big, 16),
            Err(NumericError::EncodingOverflow { .. })
        ));
        assert!(fp_encode(-too_big, 16).is_err());
        assert!(fp_encode(f64::NAN, 16).is_err());
        assert!(fp_encode(f64::INFINITY, 16).is_err());
    }

    #[test]
    fn decode_encode_within_quantum() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let quantum = 1.0 / 65536.0;
        for _ in 0..10_000 {
            let x: f64 = rng.random_range(-1.0e6..1.0e6);
            let back = fp_decode(fp_encode(x, 16).unwrap(), 16);
            assert!((back - x).abs() <= quantum, "{x} -> {back}");
        }
    }

    #[test]
    fn vector_ops_check_shapes() {
        let mut a = FixedVec::encode(&[1.0, 2.0], 16).unwrap();
        let b = FixedVec::encode(&[0.5, -3.0], 16).unwrap();
        a.add_assign(&b).unwrap();
        assert_eq!(a.decode(), vec![1.5, -1.0]);
        a.sub_assign(&b).unwrap();
        assert_eq!(a.decode(), vec![1.0, 2.0]);
        let c = FixedVec::zeros(3, 16);
        assert!(a.add_assign(&c).is_err());
        let d = FixedVec::zeros(2, 8);
        assert!(matches!(
            a.add_assign(&d),
            Err(NumericError::ScaleMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn lift_of_encode_is_scaled_round(x in -1.0e9f64..1.0e9, f in 0u32..24) {
            let expected = (x * (1u64 << f) as f64).round() as i64;
            prop_assert_eq!(fp_encode(x, f).unwrap().lift_signed(), expected);
        }

        #[test]
        fn encode_decode_fixes_representable_values(s in -(1i64 << 40)..(1i64 << 40)) {
            let e = FieldElement::from_i64(s);
            prop_assert_eq!(fp_encode(fp_decode(e, 16), 16).unwrap(), e);
        }
    }
}
