//! IT-MAC session between one prover (a client) and the verifier (the server).
//!
//! Both views live in one struct because the simulator plays every party, but
//! the prover-side store (`values`, `macs`) and the verifier-side store
//! (`delta`, `keys`) are never mixed: prover messages are computed only from
//! the prover store and checked only against the verifier store. Correlated
//! randomness comes from a trusted dealer seeded per session.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{DealerBudget, Lin, ZkError, ZkTranscript};
use crate::field::FieldElement;

/// Handle to an authenticated value inside a [`ZkSession`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AuthValue(pub(crate) usize);

/// What the prover sends to open a value: the value and its MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Opening {
    pub value: FieldElement,
    pub mac: FieldElement,
}

#[derive(Debug)]
struct Dealer {
    rng: ChaCha20Rng,
    remaining: DealerBudget,
}

#[derive(Debug)]
pub struct ZkSession {
    dealer: Dealer,
    // prover view
    values: Vec<FieldElement>,
    macs: Vec<FieldElement>,
    // verifier view
    delta: FieldElement,
    keys: Vec<FieldElement>,
    transcript: ZkTranscript,
}

impl ZkSession {
    /// Opens a session; the dealer samples the global key `delta` from `seed`.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let delta = FieldElement::random_nonzero(&mut rng);
        ZkSession {
            dealer: Dealer {
                rng,
                remaining: DealerBudget::default(),
            },
            values: Vec::new(),
            macs: Vec::new(),
            delta,
            keys: Vec::new(),
            transcript: ZkTranscript::default(),
        }
    }

    #[cfg(test)]
    pub(crate) fn with_delta(seed: u64, delta: FieldElement) -> Self {
        let mut s = Self::new(seed);
        s.delta = delta;
        s
    }

    /// Asks the dealer for more correlated randomness.
    pub fn provision(&mut self, budget: DealerBudget) {
        self.dealer.remaining.authentications += budget.authentications;
        self.dealer.remaining.triples += budget.triples;
    }

    pub fn remaining_budget(&self) -> DealerBudget {
        self.dealer.remaining
    }

    pub fn transcript(&self) -> &ZkTranscript {
        &self.transcript
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Dealer-issued authenticated random value: returns (r, M[r], K[r]).
    fn dealer_random(&mut self) -> (FieldElement, FieldElement, FieldElement) {
        let r = FieldElement::random(&mut self.dealer.rng);
        let key = FieldElement::random(&mut self.dealer.rng);
        (r, key + self.delta * r, key)
    }

    fn push(&mut self, value: FieldElement, mac: FieldElement, key: FieldElement) -> AuthValue {
        self.values.push(value);
        self.macs.push(mac);
        self.keys.push(key);
        AuthValue(self.values.len() - 1)
    }

    /// Authenticates a prover-known value.
    ///
    /// The dealer hands the prover a random authenticated `r`; the prover
    /// sends `d = x - r` and the verifier shifts its key by `-delta * d`.
    pub fn authenticate(&mut self, x: FieldElement) -> Result<AuthValue, ZkError> {
        if self.dealer.remaining.authentications == 0 {
            return Err(ZkError::DealerExhausted);
        }
        self.dealer.remaining.authentications -= 1;
        let (r, mac, key_r) = self.dealer_random();
        let correction = x - r;
        self.transcript.push(correction);
        let key = key_r - self.delta * correction;
        Ok(self.push(x, mac, key))
    }

    /// Prover view `(x, M[x])`, exposed for inspection in tests and audits.
    pub fn prover_view(&self, v: AuthValue) -> (FieldElement, FieldElement) {
        (self.values[v.0], self.macs[v.0])
    }

    /// Verifier view `K[x]`.
    pub fn verifier_key(&self, v: AuthValue) -> FieldElement {
        self.keys[v.0]
    }

    pub fn delta(&self) -> FieldElement {
        self.delta
    }

    /// Value the prover holds for a linear combination.
    pub fn prover_value(&self, lin: &Lin) -> FieldElement {
        lin.terms
            .iter()
            .map(|&(c, v)| c * self.values[v.0])
            .sum::<FieldElement>()
            + lin.constant
    }

    /// The opening an honest prover sends for `lin`.
    pub fn prover_opening(&self, lin: &Lin) -> Opening {
        let mac = lin.terms.iter().map(|&(c, v)| c * self.macs[v.0]).sum();
        Opening {
            value: self.prover_value(lin),
            mac,
        }
    }

    fn verifier_key_of(&self, lin: &Lin) -> FieldElement {
        // a public constant c carries key -delta*c and MAC 0
        lin.terms
            .iter()
            .map(|&(c, v)| c * self.keys[v.0])
            .sum::<FieldElement>()
            - self.delta * lin.constant
    }

    /// Verifier-side check of a claimed opening.
    pub fn verify_opening(&mut self, lin: &Lin, opening: Opening) -> Result<FieldElement, ZkError> {
        self.transcript.push(opening.value);
        self.transcript.push(opening.mac);
        if opening.mac == self.verifier_key_of(lin) + self.delta * opening.value {
            Ok(opening.value)
        } else {
            Err(ZkError::Forgery)
        }
    }

    /// Honest opening of `lin`.
    pub fn open(&mut self, lin: &Lin) -> Result<FieldElement, ZkError> {
        let opening = self.prover_opening(lin);
        self.verify_opening(lin, opening)
    }

    /// Opens `lin` and requires it to be zero.
    pub fn check_zero(&mut self, lin: &Lin) -> Result<(), ZkError> {
        if self.open(lin)?.is_zero() {
            Ok(())
        } else {
            Err(ZkError::NotZero)
        }
    }

    /// Dealer triple `(a, b, a*b)`, authenticated on both sides.
    fn triple(&mut self) -> Result<(AuthValue, AuthValue, AuthValue), ZkError> {
        if self.dealer.remaining.triples == 0 {
            return Err(ZkError::DealerExhausted);
        }
        self.dealer.remaining.triples -= 1;
        let make = |s: &mut Self, value: FieldElement| {
            let key = FieldElement::random(&mut s.dealer.rng);
            let mac = key + s.delta * value;
            s.push(value, mac, key)
        };
        let a = FieldElement::random(&mut self.dealer.rng);
        let b = FieldElement::random(&mut self.dealer.rng);
        let ta = make(self, a);
        let tb = make(self, b);
        let tc = make(self, a * b);
        Ok((ta, tb, tc))
    }

    /// Proves `z = x * y` by sacrificing one dealer triple.
    pub fn mult_check(&mut self, x: &Lin, y: &Lin, z: &Lin) -> Result<(), ZkError> {
        let (a, b, c) = self.triple()?;
        let e = self.open(&(x.clone() - Lin::from(a)))?;
        let f = self.open(&(y.clone() - Lin::from(b)))?;
        // z - c - e*b - f*a - e*f
        let check = z.clone() - Lin::from(c) - Lin::from(b) * e - Lin::from(a) * f - e * f;
        match self.check_zero(&check) {
            Err(ZkError::NotZero) => Err(ZkError::MultCheckFailed),
            other => other,
        }
    }

    /// Authenticates the prover's product of `x` and `y` and proves it.
    pub fn mul(&mut self, x: &Lin, y: &Lin) -> Result<AuthValue, ZkError> {
        let product = self.prover_value(x) * self.prover_value(y);
        let z = self.authenticate(product)?;
        self.mult_check(x, y, &Lin::from(z))?;
        Ok(z)
    }

    /// Proves `0 <= value(d) <= bound` by a two-sided bit decomposition.
    pub fn range_proof(&mut self, d: &Lin, bound: u64) -> Result<(), ZkError> {
        let bits = 64 - bound.leading_zeros() as usize;
        let value = self.prover_value(d).value();
        let upper = FieldElement::new(bound) - FieldElement::new(value);
        let low = self.decompose(value, bits)?;
        let high = self.decompose(upper.value(), bits)?;
        let relation = |bits: &[AuthValue]| {
            bits.iter().enumerate().fold(Lin::zero(), |acc, (j, &b)| {
                acc + Lin::from(b) * FieldElement::new(1 << j)
            })
        };
        let sum_low = relation(&low);
        let sum_high = relation(&high);
        self.check_zero(&(sum_low - d.clone()))
            .and_then(|_| {
                self.check_zero(&(sum_high - (Lin::constant(FieldElement::new(bound)) - d.clone())))
            })
            .map_err(|e| match e {
                ZkError::NotZero => ZkError::RangeFailed,
                other => other,
            })
    }

    /// Authenticates the low `bits` bits of `value` and proves each boolean.
    fn decompose(&mut self, value: u64, bits: usize) -> Result<Vec<AuthValue>, ZkError> {
        let mut out = Vec::with_capacity(bits);
        for j in 0..bits {
            let bit = FieldElement::new((value >> j) & 1);
            let b = self.authenticate(bit)?;
            let lb = Lin::from(b);
            // b*b = b holds only for b in {0, 1}
            self.mult_check(&lb, &lb, &lb).map_err(|e| match e {
                ZkError::MultCheckFailed => ZkError::RangeFailed,
                other => other,
            })?;
            out.push(b);
        }
        Ok(out)
    }

    /// Overwrites the prover's value without touching its MAC, as a cheating
    /// prover would when presenting a different value than it authenticated.
    pub fn tamper_prover_value(&mut self, v: AuthValue, value: FieldElement) {
        self.values[v.0] = value;
    }

    /// Flips the prover's MAC for `v`; fault injection for self-tests.
    pub fn corrupt_prover_mac(&mut self, v: AuthValue) {
        self.macs[v.0] += FieldElement::ONE;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn session() -> ZkSession {
        let mut s = ZkSession::new(99);
        s.provision(DealerBudget {
            authentications: 100_000,
            triples: 100_000,
        });
        s
    }

    fn fe(v: u64) -> FieldElement {
        FieldElement::new(v)
    }

    #[test]
    fn definitional_mac_example() {
        let mut s = ZkSession::with_delta(1, fe(7));
        let v = s.push(fe(3), fe(31), fe(10));
        assert_eq!(s.prover_view(v), (fe(3), fe(31)));
        assert_eq!(s.verifier_key(v), fe(10));
        assert_eq!(s.open(&v.into()).unwrap(), fe(3));
        // x' = 4 with the MAC of x = 3: 31 != 10 + 7*4
        let forged = Opening {
            value: fe(4),
            mac: fe(31),
        };
        assert_eq!(s.verify_opening(&v.into(), forged), Err(ZkError::Forgery));
    }

    #[test]
    fn zero_value_mac_equals_key() {
        let mut s = session();
        let v = s.authenticate(FieldElement::ZERO).unwrap();
        assert_eq!(s.prover_view(v).1, s.verifier_key(v));
    }

    #[test]
    fn relation_holds_for_random_authentications() {
        let mut s = session();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let x = FieldElement::random(&mut rng);
            let v = s.authenticate(x).unwrap();
            let (value, mac) = s.prover_view(v);
            assert_eq!(value, x);
            assert_eq!(mac, s.verifier_key(v) + s.delta() * x);
        }
    }

    #[test]
    fn random_forgeries_rejected() {
        let mut s = session();
        let v = s.authenticate(fe(3)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let lin = Lin::from(v);
        for _ in 0..100_000 {
            let forged = Opening {
                value: FieldElement::random(&mut rng),
                mac: FieldElement::random(&mut rng),
            };
            assert!(s.verify_opening(&lin, forged).is_err());
        }
    }

    #[test]
    fn exhausted_dealer_is_a_setup_error() {
        let mut s = ZkSession::new(1);
        assert_eq!(s.authenticate(fe(1)), Err(ZkError::DealerExhausted));
        s.provision(DealerBudget {
            authentications: 1,
            triples: 0,
        });
        let a = s.authenticate(fe(2)).unwrap();
        let b = s.authenticate(fe(3));
        assert_eq!(b, Err(ZkError::DealerExhausted));
        assert_eq!(
            s.mult_check(&a.into(), &a.into(), &a.into()),
            Err(ZkError::DealerExhausted)
        );
    }

    #[test]
    fn linear_homomorphism() {
        let mut s = session();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..1_000 {
            let (x, y) = (
                FieldElement::random(&mut rng),
                FieldElement::random(&mut rng),
            );
            let (alpha, beta, gamma) = (
                FieldElement::random(&mut rng),
                FieldElement::random(&mut rng),
                FieldElement::random(&mut rng),
            );
            let ax = s.authenticate(x).unwrap();
            let ay = s.authenticate(y).unwrap();
            let lin = Lin::from(ax) * alpha + Lin::from(ay) * beta + gamma;
            assert_eq!(s.open(&lin).unwrap(), alpha * x + beta * y + gamma);
        }
    }

    #[test]
    fn mult_check_examples() {
        let mut s = session();
        let x = s.authenticate(fe(2)).unwrap();
        let y = s.authenticate(fe(3)).unwrap();
        let six = s.authenticate(fe(6)).unwrap();
        let seven = s.authenticate(fe(7)).unwrap();
        assert_eq!(s.mult_check(&x.into(), &y.into(), &six.into()), Ok(()));
        assert_eq!(
            s.mult_check(&x.into(), &y.into(), &seven.into()),
            Err(ZkError::MultCheckFailed)
        );
    }

    #[test]
    fn mult_check_monte_carlo() {
        let mut s = session();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..1_000 {
            let a = FieldElement::random(&mut rng);
            let b = FieldElement::random(&mut rng);
            let x = s.authenticate(a).unwrap();
            let y = s.authenticate(b).unwrap();
            let z = s.authenticate(a * b).unwrap();
            assert!(s.mult_check(&x.into(), &y.into(), &z.into()).is_ok());
            let off = FieldElement::random_nonzero(&mut rng);
            let bad = s.authenticate(a * b + off).unwrap();
            assert_eq!(
                s.mult_check(&x.into(), &y.into(), &bad.into()),
                Err(ZkError::MultCheckFailed)
            );
        }
    }

    #[test]
    fn mul_costs_one_triple() {
        let mut s = ZkSession::new(5);
        s.provision(DealerBudget {
            authentications: 3,
            triples: 1,
        });
        let x = s.authenticate(fe(6)).unwrap();
        let y = s.authenticate(fe(7)).unwrap();
        let z = s.mul(&x.into(), &y.into()).unwrap();
        assert_eq!(s.prover_view(z).0, fe(42));
        assert_eq!(s.remaining_budget(), DealerBudget::default());
    }

    #[test]
    fn range_proof_boundaries() {
        let mut s = session();
        let mut check = |v: i64, bound: u64| {
            let d = s.authenticate(FieldElement::from_i64(v)).unwrap();
            s.range_proof(&d.into(), bound)
        };
        assert_eq!(check(0, 7), Ok(()));
        assert_eq!(check(7, 7), Ok(()));
        assert_eq!(check(8, 7), Err(ZkError::RangeFailed));
        assert_eq!(check(-1, 7), Err(ZkError::RangeFailed));
        assert_eq!(check(0, 0), Ok(()));
        assert_eq!(check(1, 0), Err(ZkError::RangeFailed));
    }

    #[test]
    fn range_proof_exhaustive_sweep() {
        let mut s = session();
        for v in -16i64..=48 {
            let d = s.authenticate(FieldElement::from_i64(v)).unwrap();
            let accepted = s.range_proof(&d.into(), 31).is_ok();
            assert_eq!(accepted, (0..=31).contains(&v), "d = {v}");
        }
    }

    #[test]
    fn non_boolean_bit_is_caught() {
        // a prover that authenticates a 2 as a "bit" fails the b*b = b check
        let mut s = session();
        let two = s.authenticate(fe(2)).unwrap();
        let l = Lin::from(two);
        assert_eq!(s.mult_check(&l, &l, &l), Err(ZkError::MultCheckFailed));
    }

    #[test]
    fn tampered_value_fails_opening() {
        let mut s = session();
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for _ in 0..1_000 {
            let x = FieldElement::random(&mut rng);
            let v = s.authenticate(x).unwrap();
            let other = x + FieldElement::random_nonzero(&mut rng);
            s.tamper_prover_value(v, other);
            assert_eq!(s.open(&v.into()), Err(ZkError::Forgery));
        }
        let v = s.authenticate(fe(5)).unwrap();
        s.tamper_prover_value(v, fe(5));
        assert_eq!(s.open(&v.into()), Ok(fe(5)));
    }

    #[test]
    fn corrupted_mac_fails_opening() {
        let mut s = session();
        let v = s.authenticate(fe(5)).unwrap();
        s.corrupt_prover_mac(v);
        assert_eq!(s.open(&v.into()), Err(ZkError::Forgery));
    }
}
