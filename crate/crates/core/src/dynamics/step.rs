//! Step functions on the circle `[0, 1)`, closed under rotation, with an
//! exact overlap oracle for interval events.

use std::fmt;

use crate::real::Real;

/// `Σ c_i 1_[a_i, b_i)` with `0 ≤ a_i < b_i ≤ 1`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StepFunction {
    terms: Vec<(Real, Real, Real)>,
}

fn overlap(a1: &Real, b1: &Real, a2: &Real, b2: &Real) -> Real {
    let lo = if a1 > a2 { a1 } else { a2 };
    let hi = if b1 < b2 { b1 } else { b2 };
    if hi > lo {
        hi - lo
    } else {
        Real::zero()
    }
}

impl StepFunction {
    pub fn zero() -> Self {
        StepFunction::default()
    }

    pub fn constant(c: Real) -> Self {
        StepFunction::zero().with_interval(c, Real::zero(), Real::one())
    }

    /// Indicator of the arc from `a` to `b` (wrapping through 0 when `b < a`).
    pub fn arc(a: Real, b: Real) -> Self {
        StepFunction::zero().with_arc(Real::one(), a, b)
    }

    fn with_interval(mut self, c: Real, a: Real, b: Real) -> Self {
        if b > a && !c.is_zero() {
            self.terms.push((c, a, b));
        }
        self
    }

    /// Adds `c` times the indicator of the arc `[a, b)` taken mod 1.
    pub fn with_arc(self, c: Real, a: Real, b: Real) -> Self {
        let len = &b - &a;
        if len >= Real::one() {
            return self.with_interval(c, Real::zero(), Real::one());
        }
        let (a, b) = (a.fract(), b.fract());
        if a < b {
            self.with_interval(c, a, b)
        } else if b == Real::zero() {
            self.with_interval(c, a, Real::one())
        } else {
            self.with_interval(c.clone(), a, Real::one()).with_interval(c, Real::zero(), b)
        }
    }

    pub fn terms(&self) -> &[(Real, Real, Real)] {
        &self.terms
    }

    pub fn add(&self, other: &StepFunction) -> StepFunction {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        StepFunction { terms }
    }

    pub fn scale(&self, s: &Real) -> StepFunction {
        let mut out = StepFunction::zero();
        for (c, a, b) in &self.terms {
            out = out.with_interval(c * s, a.clone(), b.clone());
        }
        out
    }

    pub fn mul(&self, other: &StepFunction) -> StepFunction {
        let mut out = StepFunction::zero();
        for (c1, a1, b1) in &self.terms {
            for (c2, a2, b2) in &other.terms {
                let lo = if a1 > a2 { a1 } else { a2 };
                let hi = if b1 < b2 { b1 } else { b2 };
                out = out.with_interval(c1 * c2, lo.clone(), hi.clone());
            }
        }
        out
    }

    /// `x ↦ f(x + t)`.
    pub fn rotate(&self, t: &Real) -> StepFunction {
        let mut out = StepFunction::zero();
        for (c, a, b) in &self.terms {
            out = out.with_arc(c.clone(), a - t, b - t);
        }
        out
    }

    pub fn mean(&self) -> Real {
        self.terms.iter().map(|(c, a, b)| c * (b - a)).sum()
    }

    pub fn mean_of_product(&self, other: &StepFunction) -> Real {
        let mut acc = Real::zero();
        for (c1, a1, b1) in &self.terms {
            for (c2, a2, b2) in &other.terms {
                let o = overlap(a1, b1, a2, b2);
                if !o.is_zero() {
                    acc += c1 * c2 * o;
                }
            }
        }
        acc
    }

    pub fn sup_bound(&self) -> Real {
        self.terms.iter().map(|(c, _, _)| c.abs()).sum()
    }

    /// All coefficients are one and the intervals are pairwise disjoint.
    pub fn is_indicator(&self) -> bool {
        self.terms.iter().all(|(c, _, _)| *c == Real::one())
            && self
                .terms
                .iter()
                .enumerate()
                .all(|(i, (_, a1, b1))| self.terms[i + 1..].iter().all(|(_, a2, b2)| overlap(a1, b1, a2, b2).is_zero()))
    }

    pub fn is_exact(&self) -> bool {
        self.terms.iter().all(|(c, a, b)| c.is_exact() && a.is_exact() && b.is_exact())
    }
}

/// `ν([0, 1/2) ∩ ([0, 1/2) - t)) = 1/2 - ‖t‖` with `‖t‖` the distance to
/// the nearest integer.
pub fn half_circle_overlap(t: &Real) -> Real {
    let f = t.fract();
    let dist = f.clone().min(Real::one() - f);
    Real::ratio(1, 2) - dist
}

impl fmt::Display for StepFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (c, a, b)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}*1[{a},{b})")?;
        }
        Ok(())
    }
}
