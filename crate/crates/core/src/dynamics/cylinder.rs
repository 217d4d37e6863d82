//! Cylinder-set algebra of a Bernoulli shift over `Z^q`.

use std::cmp::Ordering;
use std::fmt;

use crate::group::GroupElement;
use crate::real::Real;

/// The event `{x : x_site = symbol for every constraint}`; sites are sorted
/// and distinct. The empty cylinder is the whole space.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Cylinder {
    constraints: Vec<(GroupElement, u32)>,
}

impl Cylinder {
    pub fn full() -> Self {
        Cylinder::default()
    }

    /// `None` when two constraints on the same site disagree.
    pub fn new(mut constraints: Vec<(GroupElement, u32)>) -> Option<Self> {
        constraints.sort();
        constraints.dedup();
        if constraints.windows(2).any(|w| w[0].0 == w[1].0) {
            return None;
        }
        Some(Cylinder { constraints })
    }

    pub fn constraints(&self) -> &[(GroupElement, u32)] {
        &self.constraints
    }

    pub fn width(&self) -> usize {
        self.constraints.len()
    }

    /// Intersection of two cylinders.
    pub fn merge(&self, other: &Cylinder) -> Option<Cylinder> {
        let (a, b) = (&self.constraints, &other.constraints);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    if a[i].1 != b[j].1 {
                        return None;
                    }
                    out.push(a[i].clone());
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Some(Cylinder { constraints: out })
    }

    /// The cylinder describing `1_C ∘ T_g`: every site moves by `+g`.
    pub fn shift(&self, g: &GroupElement) -> Cylinder {
        Cylinder { constraints: self.constraints.iter().map(|(s, a)| (s.plus(g), *a)).collect() }
    }

    pub fn measure(&self, weights: &[Real]) -> Real {
        let mut acc = Real::one();
        for (_, a) in &self.constraints {
            acc *= &weights[*a as usize];
        }
        acc
    }

    /// Measure of the intersection without building it.
    pub fn joint_measure(&self, other: &Cylinder, weights: &[Real]) -> Real {
        let (a, b) = (&self.constraints, &other.constraints);
        let mut acc = Real::one();
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    acc *= &weights[a[i].1 as usize];
                    i += 1;
                }
                Ordering::Greater => {
                    acc *= &weights[b[j].1 as usize];
                    j += 1;
                }
                Ordering::Equal => {
                    if a[i].1 != b[j].1 {
                        return Real::zero();
                    }
                    acc *= &weights[a[i].1 as usize];
                    i += 1;
                    j += 1;
                }
            }
        }
        for (_, s) in a[i..].iter().chain(&b[j..]) {
            acc *= &weights[*s as usize];
        }
        acc
    }
}

impl fmt::Display for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.constraints.is_empty() {
            return write!(f, "1");
        }
        write!(f, "1{{")?;
        for (i, (s, a)) in self.constraints.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "x{s}={a}")?;
        }
        write!(f, "}}")
    }
}

/// A finite linear combination of cylinder indicators, kept sorted with
/// equal cylinders merged and zero coefficients dropped.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CylinderPoly {
    terms: Vec<(Real, Cylinder)>,
}

impl CylinderPoly {
    pub fn zero() -> Self {
        CylinderPoly::default()
    }

    pub fn constant(c: Real) -> Self {
        CylinderPoly::from_terms(vec![(c, Cylinder::full())])
    }

    pub fn indicator(c: Cylinder) -> Self {
        CylinderPoly { terms: vec![(Real::one(), c)] }
    }

    pub fn from_terms(mut terms: Vec<(Real, Cylinder)>) -> Self {
        terms.sort_by(|a, b| a.1.cmp(&b.1));
        let mut out: Vec<(Real, Cylinder)> = Vec::with_capacity(terms.len());
        for (c, cyl) in terms {
            match out.last_mut() {
                Some(last) if last.1 == cyl => last.0 += &c,
                _ => out.push((c, cyl)),
            }
        }
        out.retain(|(c, _)| !c.is_zero());
        CylinderPoly { terms: out }
    }

    pub fn terms(&self) -> &[(Real, Cylinder)] {
        &self.terms
    }

    pub fn add(&self, other: &CylinderPoly) -> CylinderPoly {
        CylinderPoly::from_terms(self.terms.iter().chain(&other.terms).cloned().collect())
    }

    pub fn scale(&self, c: &Real) -> CylinderPoly {
        CylinderPoly::from_terms(self.terms.iter().map(|(a, cyl)| (a * c, cyl.clone())).collect())
    }

    pub fn mul(&self, other: &CylinderPoly) -> CylinderPoly {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                if let Some(z) = x.merge(y) {
                    terms.push((a * b, z));
                }
            }
        }
        CylinderPoly::from_terms(terms)
    }

    /// Translation keeps the lexicographic order of sites, so the term order
    /// is preserved.
    pub fn shift(&self, g: &GroupElement) -> CylinderPoly {
        CylinderPoly { terms: self.terms.iter().map(|(c, cyl)| (c.clone(), cyl.shift(g))).collect() }
    }

    pub fn expect(&self, weights: &[Real]) -> Real {
        self.terms.iter().map(|(c, cyl)| c * cyl.measure(weights)).sum()
    }

    pub fn expect_product(&self, other: &CylinderPoly, weights: &[Real]) -> Real {
        let mut acc = Real::zero();
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                let m = x.joint_measure(y, weights);
                if !m.is_zero() {
                    acc += a * b * m;
                }
            }
        }
        acc
    }

    /// `Σ |c|`, a bound on the sup norm.
    pub fn sup_bound(&self) -> Real {
        self.terms.iter().map(|(c, _)| c.abs()).sum()
    }

    pub fn max_symbol(&self) -> Option<u32> {
        self.terms.iter().flat_map(|(_, c)| c.constraints.iter().map(|(_, a)| *a)).max()
    }

    pub fn sites(&self) -> impl Iterator<Item = &GroupElement> {
        self.terms.iter().flat_map(|(_, c)| c.constraints.iter().map(|(s, _)| s))
    }
}

impl fmt::Display for CylinderPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (c, cyl)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}*{cyl}")?;
        }
        Ok(())
    }
}
