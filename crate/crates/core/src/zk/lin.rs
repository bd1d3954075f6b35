use std::ops::{Add, Mul, Sub};

use super::AuthValue;
use crate::field::FieldElement;

/// A public linear combination `sum c_i * x_i + constant` of authenticated values.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lin {
    pub(crate) terms: Vec<(FieldElement, AuthValue)>,
    pub(crate) constant: FieldElement,
}

impl Lin {
    pub fn zero() -> Self {
        Lin::default()
    }

    pub fn constant(c: FieldElement) -> Self {
        Lin {
            terms: Vec::new(),
            constant: c,
        }
    }
}

impl From<AuthValue> for Lin {
    fn from(v: AuthValue) -> Self {
        Lin {
            terms: vec![(FieldElement::ONE, v)],
            constant: FieldElement::ZERO,
        }
    }
}

impl Add for Lin {
    type Output = Lin;
    fn add(mut self, rhs: Lin) -> Lin {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl Sub for Lin {
    type Output = Lin;
    fn sub(mut self, rhs: Lin) -> Lin {
        self.terms
            .extend(rhs.terms.into_iter().map(|(c, v)| (-c, v)));
        self.constant -= rhs.constant;
        self
    }
}

impl Add<FieldElement> for Lin {
    type Output = Lin;
    fn add(mut self, rhs: FieldElement) -> Lin {
        self.constant += rhs;
        self
    }
}

impl Sub<FieldElement> for Lin {
    type Output = Lin;
    fn sub(mut self, rhs: FieldElement) -> Lin {
        self.constant -= rhs;
        self
    }
}

impl Mul<FieldElement> for Lin {
    type Output = Lin;
    fn mul(mut self, rhs: FieldElement) -> Lin {
        for (c, _) in &mut self.terms {
            *c *= rhs;
        }
        self.constant *= rhs;
        self
    }
}
