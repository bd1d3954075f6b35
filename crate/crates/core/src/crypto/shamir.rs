use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CryptoError;
use crate::field::{FieldElement, PrimeField};

/// A share `(index, P(index))` of a degree-`t-1` polynomial with `P(0) = secret`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShamirShare<F = FieldElement> {
    pub index: u32,
    pub value: F,
}

fn check_recipients(threshold: usize, recipients: &[u32]) -> Result<(), CryptoError> {
    if threshold == 0 || threshold > recipients.len() {
        return Err(CryptoError::BadThreshold {
            threshold,
            recipients: recipients.len(),
        });
    }
    let mut sorted = recipients.to_vec();
    sorted.sort_unstable();
    if sorted.first() == Some(&0) || sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(CryptoError::MalformedShares);
    }
    Ok(())
}

/// Shares `secret` among `recipients` with a random polynomial of degree
/// `threshold - 1`.
pub fn shamir_share<F: PrimeField, R: Rng + ?Sized>(
    secret: F,
    threshold: usize,
    recipients: &[u32],
    rng: &mut R,
) -> Result<Vec<ShamirShare<F>>, CryptoError> {
    check_recipients(threshold, recipients)?;
    let coefficients: Vec<F> = (1..threshold).map(|_| F::sample(rng)).collect();
    shamir_share_with_coefficients(secret, &coefficients, recipients)
}

/// Shares `secret` with the given higher-order coefficients
/// (`P(x) = secret + c_1 x + ... + c_{t-1} x^{t-1}`); the threshold is
/// `coefficients.len() + 1`.
pub fn shamir_share_with_coefficients<F: PrimeField>(
    secret: F,
    coefficients: &[F],
    recipients: &[u32],
) -> Result<Vec<ShamirShare<F>>, CryptoError> {
    check_recipients(coefficients.len() + 1, recipients)?;
    Ok(recipients
        .iter()
        .map(|&index| {
            let x = F::from_u64(index as u64);
            // Horner from the top coefficient down to the secret
            let value = coefficients
                .iter()
                .rev()
                .fold(F::zero(), |acc, &c| acc * x + c)
                * x
                + secret;
            ShamirShare { index, value }
        })
        .collect())
}

/// Lagrange interpolation at zero over the first `threshold` shares.
pub fn shamir_reconstruct<F: PrimeField>(
    shares: &[ShamirShare<F>],
    threshold: usize,
) -> Result<F, CryptoError> {
    if threshold == 0 || shares.len() < threshold {
        return Err(CryptoError::InsufficientShares {
            needed: threshold.max(1),
            got: shares.len(),
        });
    }
    let mut indices: Vec<u32> = shares.iter().map(|s| s.index).collect();
    indices.sort_unstable();
    if indices[0] == 0 || indices.windows(2).any(|w| w[0] == w[1]) {
        return Err(CryptoError::MalformedShares);
    }

    let used = &shares[..threshold];
    let mut secret = F::zero();
    for (j, sj) in used.iter().enumerate() {
        let xj = F::from_u64(sj.index as u64);
        let mut num = F::one();
        let mut den = F::one();
        for (m, sm) in used.iter().enumerate() {
            if m == j {
                continue;
            }
            let xm = F::from_u64(sm.index as u64);
            num = num * (-xm);
            den = den * (xj - xm);
        }
        // indices are distinct and below the modulus, so den != 0
        let inv = den.inv().ok_or(CryptoError::MalformedShares)?;
        secret = secret + sj.value * num * inv;
    }
    Ok(secret)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::ops::{Add, Mul, Neg, Sub};

    /// GF(P) for tiny P, used to enumerate sharings exhaustively.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    struct Small<const P: u64>(u64);

    impl<const P: u64> Add for Small<P> {
        type Output = Self;
        fn add(self, o: Self) -> Self {
            Small((self.0 + o.0) % P)
        }
    }
    impl<const P: u64> Sub for Small<P> {
        type Output = Self;
        fn sub(self, o: Self) -> Self {
            Small((self.0 + P - o.0) % P)
        }
    }
    impl<const P: u64> Mul for Small<P> {
        type Output = Self;
        fn mul(self, o: Self) -> Self {
            Small(self.0 * o.0 % P)
        }
    }
    impl<const P: u64> Neg for Small<P> {
        type Output = Self;
        fn neg(self) -> Self {
            Small((P - self.0) % P)
        }
    }
    impl<const P: u64> PrimeField for Small<P> {
        fn zero() -> Self {
            Small(0)
        }
        fn one() -> Self {
            Small(1)
        }
        fn from_u64(v: u64) -> Self {
            Small(v % P)
        }
        fn inv(self) -> Option<Self> {
            (1..P).find(|&c| self.0 * c % P == 1).map(Small)
        }
        fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
            Small(rng.random_range(0..P))
        }
    }

    fn fe(v: u64) -> FieldElement {
        FieldElement::new(v)
    }

    #[test]
    fn fixed_polynomial_example() {
        let shares = shamir_share_with_coefficients(fe(5), &[fe(3)], &[1, 2, 3]).unwrap();
        let got: Vec<(u32, u64)> = shares.iter().map(|s| (s.index, s.value.value())).collect();
        assert_eq!(got, vec![(1, 8), (2, 11), (3, 14)]);
        assert_eq!(
            shamir_reconstruct(&[shares[0], shares[2]], 2).unwrap(),
            fe(5)
        );
        assert_eq!(
            shamir_reconstruct(&[shares[0], shares[1]], 2).unwrap(),
            fe(5)
        );
    }

    #[test]
    fn zero_secret_stays_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..100 {
            let shares = shamir_share(FieldElement::ZERO, 2, &[1, 2, 3], &mut rng).unwrap();
            assert_eq!(
                shamir_reconstruct(&shares[1..], 2).unwrap(),
                FieldElement::ZERO
            );
        }
    }

    #[test]
    fn parameter_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        assert!(matches!(
            shamir_share(fe(1), 4, &[1, 2, 3], &mut rng),
            Err(CryptoError::BadThreshold { .. })
        ));
        assert_eq!(
            shamir_share(fe(1), 2, &[1, 1, 3], &mut rng),
            Err(CryptoError::MalformedShares)
        );
        assert_eq!(
            shamir_share(fe(1), 2, &[0, 1], &mut rng),
            Err(CryptoError::MalformedShares)
        );
        let shares = shamir_share(fe(9), 3, &[1, 2, 3], &mut rng).unwrap();
        assert_eq!(
            shamir_reconstruct(&shares[..2], 3),
            Err(CryptoError::InsufficientShares { needed: 3, got: 2 })
        );
        let dup = [shares[0], shares[0], shares[1]];
        assert_eq!(
            shamir_reconstruct(&dup, 3),
            Err(CryptoError::MalformedShares)
        );
    }

    #[test]
    fn random_subsets_recover_secret() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..1_000 {
            let n = rng.random_range(1..=64usize);
            let t = rng.random_range(1..=n);
            let recipients: Vec<u32> = (1..=n as u32).collect();
            let secret = FieldElement::random(&mut rng);
            let mut shares = shamir_share(secret, t, &recipients, &mut rng).unwrap();
            shares.shuffle(&mut rng);
            assert_eq!(shamir_reconstruct(&shares[..t], t).unwrap(), secret);
        }
    }

    // For t = 2 over GF(251): every secret is consistent with any single share,
    // each exactly once per choice of linear coefficient.
    #[test]
    fn single_share_is_uniform_for_every_secret_gf251() {
        type F = Small<251>;
        for (index, other) in [(1u32, 2u32), (2, 1), (250, 3)] {
            for secret in 0..251u64 {
                let mut counts = [0u32; 251];
                for c in 0..251u64 {
                    let s = shamir_share_with_coefficients(
                        F::from_u64(secret),
                        &[Small(c)],
                        &[index, other],
                    )
                    .unwrap();
                    counts[s[0].value.0 as usize] += 1;
                }
                assert!(
                    counts.iter().all(|&c| c == 1),
                    "secret {secret} index {index}"
                );
            }
        }
    }

    // For t = 3 over GF(31): the joint distribution of any two shares is
    // identical for every secret.
    #[test]
    fn two_shares_leak_nothing_at_threshold_three_gf31() {
        type F = Small<31>;
        let recipients = [3u32, 7, 12];
        for secret in 0..31u64 {
            let mut counts = vec![0u32; 31 * 31];
            for c1 in 0..31 {
                for c2 in 0..31 {
                    let s = shamir_share_with_coefficients(
                        F::from_u64(secret),
                        &[Small(c1), Small(c2)],
                        &recipients,
                    )
                    .unwrap();
                    counts[(s[0].value.0 * 31 + s[1].value.0) as usize] += 1;
                }
            }
            assert!(counts.iter().all(|&c| c == 1), "secret {secret}");
        }
    }

    proptest! {
        #[test]
        fn any_threshold_subset_round_trips(
            secret in 0u64..crate::field::MODULUS,
            n in 1usize..=64,
            t_frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let t = 1 + ((n - 1) as f64 * t_frac) as usize;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let recipients: Vec<u32> = (1..=n as u32).collect();
            let mut shares = shamir_share(fe(secret), t, &recipients, &mut rng).unwrap();
            shares.shuffle(&mut rng);
            prop_assert_eq!(shamir_reconstruct(&shares[..t], t).unwrap(), fe(secret));
        }
    }
}
