//! Measure-preserving actions with exact observable algebras.
//!
//! Points of the underlying spaces are never materialized. Each system
//! carries an algebra of observables that is closed under products and under
//! composition with the action, and an expectation oracle that evaluates
//! `ω(f) = ∫ f dν` exactly whenever the inputs are rational.

pub mod cylinder;
pub mod finite;
pub mod step;
pub mod trig;

use std::fmt;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel};
use crate::real::Real;

pub use cylinder::{Cylinder, CylinderPoly};
pub use finite::Permutation;
pub use step::StepFunction;
pub use trig::{Angle, BigMatrix, TrigPoly};

#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Cylinder(CylinderPoly),
    Trig(TrigPoly),
    Step(StepFunction),
    Table(Vec<Real>),
    /// `Σ left_i ⊗ right_i` on a product system.
    Tensor(Vec<(Observable, Observable)>),
}

impl Observable {
    /// Indicator of `{x : x_site = symbol, ...}`.
    pub fn cylinder(constraints: &[(&[i64], u32)]) -> Result<Observable> {
        let cons = constraints.iter().map(|(s, a)| (GroupElement::new(s), *a)).collect();
        let cyl = Cylinder::new(cons).ok_or_else(|| Error::input("contradictory cylinder constraints"))?;
        Ok(Observable::Cylinder(CylinderPoly::indicator(cyl)))
    }

    /// `1_{x_0 = symbol}` over `Z^rank`.
    pub fn single_site(rank: usize, symbol: u32) -> Observable {
        let cyl = Cylinder::new(vec![(GroupElement::zero(rank), symbol)]).expect("one constraint");
        Observable::Cylinder(CylinderPoly::indicator(cyl))
    }

    pub fn arc(a: Real, b: Real) -> Observable {
        Observable::Step(StepFunction::arc(a, b))
    }

    pub fn tensor(left: Observable, right: Observable) -> Observable {
        Observable::Tensor(vec![(left, right)])
    }

    pub fn algebra(&self) -> &'static str {
        match self {
            Observable::Cylinder(_) => "cylinder polynomial",
            Observable::Trig(_) => "trigonometric polynomial",
            Observable::Step(_) => "interval step function",
            Observable::Table(_) => "table",
            Observable::Tensor(_) => "tensor sum",
        }
    }

    /// True when every coefficient is an exact rational.
    pub fn is_exact(&self) -> bool {
        match self {
            Observable::Cylinder(p) => p.terms().iter().all(|(c, _)| c.is_exact()),
            Observable::Trig(t) => t.terms().all(|(_, c)| c.re.is_exact() && c.im.is_exact()),
            Observable::Step(s) => s.is_exact(),
            Observable::Table(t) => t.iter().all(Real::is_exact),
            Observable::Tensor(ts) => ts.iter().all(|(a, b)| a.is_exact() && b.is_exact()),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Cylinder(p) => write!(f, "{p}"),
            Observable::Trig(t) => write!(f, "{t}"),
            Observable::Step(s) => write!(f, "{s}"),
            Observable::Table(t) => {
                let v: Vec<String> = t.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", v.join(","))
            }
            Observable::Tensor(ts) => {
                for (i, (a, b)) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "({a})⊗({b})")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemKind {
    /// Shift on `{0..s-1}^{Z^q}` with product measure; `(T_g x)_i = x_{i+g}`.
    Bernoulli { weights: Vec<Real> },
    /// `T_g x = x + gα` on the `d`-torus.
    Rotation { alpha: Vec<Angle> },
    /// `T_g x = A^g x` on the torus, `|det A| = 1`.
    Endomorphism { matrix: BigMatrix, inverse: BigMatrix },
    /// Weighted points with `T_g = Π σ_i^{g_i}`.
    Finite { weights: Vec<Real>, generators: Vec<Permutation> },
    /// Diagonal action on a product space.
    Product(Box<MPSystem>, Box<MPSystem>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MPSystem {
    pub kind: SystemKind,
    pub group: GroupModel,
    pub label: String,
}

fn check_probability(weights: &[Real]) -> Result<()> {
    if weights.iter().any(Real::is_negative) {
        return Err(Error::input("weights must be nonnegative"));
    }
    let total: Real = weights.iter().sum();
    if !total.approx_eq(&Real::one(), 1e-12) {
        return Err(Error::input(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

impl MPSystem {
    pub fn bernoulli(rank: usize, weights: Vec<Real>) -> Result<MPSystem> {
        if weights.len() < 2 {
            return Err(Error::input("Bernoulli shift needs at least two symbols"));
        }
        check_probability(&weights)?;
        let w: Vec<String> = weights.iter().map(|w| w.to_string()).collect();
        Ok(MPSystem {
            label: format!("bernoulli({}, {rank}, [{}])", weights.len(), w.join(",")),
            kind: SystemKind::Bernoulli { weights },
            group: GroupModel::lattice(rank)?,
        })
    }

    /// Fair coin over `Z^rank`.
    pub fn fair_coin(rank: usize) -> MPSystem {
        MPSystem::bernoulli(rank, vec![Real::ratio(1, 2), Real::ratio(1, 2)]).expect("valid weights")
    }

    pub fn rotation(alpha: Vec<Angle>) -> Result<MPSystem> {
        if alpha.is_empty() {
            return Err(Error::input("rotation needs at least one angle"));
        }
        let a: Vec<String> = alpha.iter().map(|a| a.to_string()).collect();
        Ok(MPSystem {
            label: format!("rotation([{}])", a.join(",")),
            kind: SystemKind::Rotation { alpha },
            group: GroupModel::integers(),
        })
    }

    pub fn endomorphism(rows: Vec<Vec<i64>>) -> Result<MPSystem> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::input("torus endomorphism matrix must be square"));
        }
        let matrix: BigMatrix = rows.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect();
        let inverse = trig::unimodular_inverse(&matrix)
            .ok_or_else(|| Error::input("torus endomorphism must have determinant ±1"))?;
        Ok(MPSystem {
            label: format!("endomorphism({rows:?})"),
            kind: SystemKind::Endomorphism { matrix, inverse },
            group: GroupModel::integers(),
        })
    }

    /// The cat map `[[2,1],[1,1]]`.
    pub fn cat_map() -> MPSystem {
        let mut s = MPSystem::endomorphism(vec![vec![2, 1], vec![1, 1]]).expect("unimodular");
        s.label = "catmap".into();
        s
    }

    pub fn finite(weights: Vec<Real>, generators: Vec<Permutation>) -> Result<MPSystem> {
        check_probability(&weights)?;
        if generators.is_empty() {
            return Err(Error::input("finite system needs at least one generator"));
        }
        for s in &generators {
            if s.len() != weights.len() {
                return Err(Error::input("generator size does not match the point count"));
            }
            if (0..weights.len()).any(|x| weights[s.apply(x)] != weights[x]) {
                return Err(Error::input("generator does not preserve the point weights"));
            }
        }
        for a in &generators {
            for b in &generators {
                if a.compose(b) != b.compose(a) {
                    return Err(Error::input("generators do not commute"));
                }
            }
        }
        let rank = generators.len();
        Ok(MPSystem {
            label: format!("finite({} points, {rank} generators)", weights.len()),
            kind: SystemKind::Finite { weights, generators },
            group: GroupModel::lattice(rank)?,
        })
    }

    /// Identity action on weighted points.
    pub fn trivial(weights: Vec<Real>) -> Result<MPSystem> {
        let n = weights.len();
        let mut s = MPSystem::finite(weights, vec![Permutation::identity(n)])?;
        s.label = format!("trivial({n} points)");
        Ok(s)
    }

    pub fn product(a: MPSystem, b: MPSystem) -> Result<MPSystem> {
        if a.group != b.group {
            return Err(Error::structural(format!(
                "product of systems over {} and {}",
                a.group.describe(),
                b.group.describe()
            )));
        }
        Ok(MPSystem {
            label: format!("product({}, {})", a.label, b.label),
            group: a.group.clone(),
            kind: SystemKind::Product(Box::new(a), Box::new(b)),
        })
    }

    fn mismatch(&self, f: &Observable) -> Error {
        Error::AlgebraMismatch { system: self.label.clone(), detail: format!("{} is not in this algebra", f.algebra()) }
    }

    pub fn validate(&self, f: &Observable) -> Result<()> {
        match (&self.kind, f) {
            (SystemKind::Bernoulli { weights }, Observable::Cylinder(p)) => {
                if p.max_symbol().is_some_and(|a| a as usize >= weights.len()) {
                    return Err(Error::AlgebraMismatch {
                        system: self.label.clone(),
                        detail: "symbol outside the alphabet".into(),
                    });
                }
                if p.sites().any(|s| s.rank() != self.group.rank()) {
                    return Err(Error::AlgebraMismatch {
                        system: self.label.clone(),
                        detail: "site rank differs from the acting group".into(),
                    });
                }
                Ok(())
            }
            (SystemKind::Rotation { alpha }, Observable::Trig(t)) if t.dim() == alpha.len() => Ok(()),
            (SystemKind::Rotation { alpha }, Observable::Step(_)) if alpha.len() == 1 => Ok(()),
            (SystemKind::Endomorphism { matrix, .. }, Observable::Trig(t)) if t.dim() == matrix.len() => Ok(()),
            (SystemKind::Finite { weights, .. }, Observable::Table(t)) if t.len() == weights.len() => Ok(()),
            (SystemKind::Product(a, b), Observable::Tensor(ts)) => {
                for (l, r) in ts {
                    a.validate(l)?;
                    b.validate(r)?;
                }
                Ok(())
            }
            _ => Err(self.mismatch(f)),
        }
    }

    /// `f ∘ T_g`.
    pub fn koopman(&self, g: &GroupElement, f: &Observable) -> Result<Observable> {
        self.group.check(g)?;
        Ok(match (&self.kind, f) {
            (SystemKind::Bernoulli { .. }, Observable::Cylinder(p)) => Observable::Cylinder(p.shift(g)),
            (SystemKind::Rotation { alpha }, Observable::Trig(t)) => Observable::Trig(t.rotate(alpha, g.0[0])?),
            (SystemKind::Rotation { alpha }, Observable::Step(s)) => {
                Observable::Step(s.rotate(&alpha[0].times_fract(g.0[0])))
            }
            (SystemKind::Endomorphism { matrix, inverse }, Observable::Trig(t)) => {
                let e = g.0[0];
                let base = if e >= 0 { matrix } else { inverse };
                Observable::Trig(t.remap(&trig::mat_pow(base, e.unsigned_abs())))
            }
            (SystemKind::Finite { generators, .. }, Observable::Table(t)) => {
                let mut map = Permutation::identity(t.len());
                for (s, &e) in generators.iter().zip(g.coords()) {
                    map = map.compose(&s.pow(e));
                }
                Observable::Table(finite::pull_back(t, &map))
            }
            (SystemKind::Product(a, b), Observable::Tensor(ts)) => {
                let mut out = Vec::with_capacity(ts.len());
                for (l, r) in ts {
                    out.push((a.koopman(g, l)?, b.koopman(g, r)?));
                }
                Observable::Tensor(out)
            }
            _ => return Err(self.mismatch(f)),
        })
    }

    /// `ω(f)`. Trigonometric observables must have a real mean.
    pub fn expect(&self, f: &Observable) -> Result<Real> {
        match (&self.kind, f) {
            (SystemKind::Bernoulli { weights }, Observable::Cylinder(p)) => Ok(p.expect(weights)),
            (SystemKind::Rotation { .. } | SystemKind::Endomorphism { .. }, Observable::Trig(t)) => {
                real_part(t.mean(), &self.label)
            }
            (SystemKind::Rotation { .. }, Observable::Step(s)) => Ok(s.mean()),
            (SystemKind::Finite { weights, .. }, Observable::Table(t)) => Ok(finite::weighted_mean(t, weights)),
            (SystemKind::Product(a, b), Observable::Tensor(ts)) => {
                let mut acc = Real::zero();
                for (l, r) in ts {
                    acc += a.expect(l)? * b.expect(r)?;
                }
                Ok(acc)
            }
            _ => Err(self.mismatch(f)),
        }
    }

    /// `ω(f h)` without materializing the product where the algebra allows.
    pub fn expect_product(&self, f: &Observable, h: &Observable) -> Result<Real> {
        match (&self.kind, f, h) {
            (SystemKind::Bernoulli { weights }, Observable::Cylinder(p), Observable::Cylinder(q)) => {
                Ok(p.expect_product(q, weights))
            }
            (
                SystemKind::Rotation { .. } | SystemKind::Endomorphism { .. },
                Observable::Trig(p),
                Observable::Trig(q),
            ) => real_part(p.mean_of_product(q), &self.label),
            (SystemKind::Rotation { .. }, Observable::Step(p), Observable::Step(q)) => Ok(p.mean_of_product(q)),
            (SystemKind::Finite { weights, .. }, Observable::Table(p), Observable::Table(q)) => {
                Ok(p.iter().zip(q).zip(weights).map(|((x, y), w)| x * y * w).sum())
            }
            (SystemKind::Product(a, b), Observable::Tensor(p), Observable::Tensor(q)) => {
                let mut acc = Real::zero();
                for (l1, r1) in p {
                    for (l2, r2) in q {
                        acc += a.expect_product(l1, l2)? * b.expect_product(r1, r2)?;
                    }
                }
                Ok(acc)
            }
            _ => Err(self.mismatch(if self.validate(f).is_err() { f } else { h })),
        }
    }

    pub fn multiply(&self, f: &Observable, h: &Observable) -> Result<Observable> {
        Ok(match (&self.kind, f, h) {
            (SystemKind::Bernoulli { .. }, Observable::Cylinder(p), Observable::Cylinder(q)) => {
                Observable::Cylinder(p.mul(q))
            }
            (_, Observable::Trig(p), Observable::Trig(q)) if self.validate(f).is_ok() => Observable::Trig(p.mul(q)),
            (SystemKind::Rotation { .. }, Observable::Step(p), Observable::Step(q)) => Observable::Step(p.mul(q)),
            (SystemKind::Finite { .. }, Observable::Table(p), Observable::Table(q)) => {
                Observable::Table(p.iter().zip(q).map(|(x, y)| x * y).collect())
            }
            (SystemKind::Product(a, b), Observable::Tensor(p), Observable::Tensor(q)) => {
                let mut out = Vec::with_capacity(p.len() * q.len());
                for (l1, r1) in p {
                    for (l2, r2) in q {
                        out.push((a.multiply(l1, l2)?, b.multiply(r1, r2)?));
                    }
                }
                Observable::Tensor(out)
            }
            _ => return Err(self.mismatch(if self.validate(f).is_err() { f } else { h })),
        })
    }

    pub fn add(&self, f: &Observable, h: &Observable) -> Result<Observable> {
        Ok(match (f, h) {
            (Observable::Cylinder(p), Observable::Cylinder(q)) => Observable::Cylinder(p.add(q)),
            (Observable::Trig(p), Observable::Trig(q)) => Observable::Trig(p.add(q)),
            (Observable::Step(p), Observable::Step(q)) => Observable::Step(p.add(q)),
            (Observable::Table(p), Observable::Table(q)) if p.len() == q.len() => {
                Observable::Table(p.iter().zip(q).map(|(x, y)| x + y).collect())
            }
            (Observable::Tensor(p), Observable::Tensor(q)) => Observable::Tensor(p.iter().chain(q).cloned().collect()),
            _ => return Err(self.mismatch(h)),
        })
    }

    pub fn scale(&self, f: &Observable, c: &Real) -> Observable {
        match f {
            Observable::Cylinder(p) => Observable::Cylinder(p.scale(c)),
            Observable::Trig(t) => Observable::Trig(t.scale(c)),
            Observable::Step(s) => Observable::Step(s.scale(c)),
            Observable::Table(t) => Observable::Table(t.iter().map(|x| x * c).collect()),
            Observable::Tensor(ts) => {
                Observable::Tensor(ts.iter().map(|(l, r)| (l.clone(), self.scale_component(r, c))).collect())
            }
        }
    }

    fn scale_component(&self, f: &Observable, c: &Real) -> Observable {
        match &self.kind {
            SystemKind::Product(_, b) => b.scale(f, c),
            _ => self.scale(f, c),
        }
    }

    /// The constant `c` in the same algebra as `like`.
    pub fn constant_like(&self, like: &Observable, c: Real) -> Result<Observable> {
        Ok(match (&self.kind, like) {
            (_, Observable::Cylinder(_)) => Observable::Cylinder(CylinderPoly::constant(c)),
            (_, Observable::Trig(t)) => Observable::Trig(TrigPoly::constant(t.dim(), c)),
            (_, Observable::Step(_)) => Observable::Step(StepFunction::constant(c)),
            (_, Observable::Table(t)) => Observable::Table(vec![c; t.len()]),
            (SystemKind::Product(a, b), Observable::Tensor(ts)) => {
                let (l, r) = ts.first().ok_or_else(|| Error::input("empty tensor has no algebra"))?;
                Observable::tensor(a.constant_like(l, c)?, b.constant_like(r, Real::one())?)
            }
            _ => return Err(self.mismatch(like)),
        })
    }

    /// `f - ω(f)`.
    pub fn centered(&self, f: &Observable) -> Result<Observable> {
        let mean = self.expect(f)?;
        self.add(f, &self.constant_like(f, -mean)?)
    }

    pub fn sup_bound(&self, f: &Observable) -> Real {
        match f {
            Observable::Cylinder(p) => p.sup_bound(),
            Observable::Trig(t) => t.sup_bound(),
            Observable::Step(s) => s.sup_bound(),
            Observable::Table(t) => t.iter().map(Real::abs).fold(Real::zero(), Real::max),
            Observable::Tensor(ts) => match &self.kind {
                SystemKind::Product(a, b) => ts.iter().map(|(l, r)| a.sup_bound(l) * b.sup_bound(r)).sum(),
                _ => Real::zero(),
            },
        }
    }

    pub fn is_real(&self, f: &Observable) -> bool {
        match f {
            Observable::Trig(t) => t.is_real(),
            Observable::Tensor(ts) => match &self.kind {
                SystemKind::Product(a, b) => ts.iter().all(|(l, r)| a.is_real(l) && b.is_real(r)),
                _ => false,
            },
            _ => true,
        }
    }

    /// Whether `f` is the indicator of an event (`f · f = f`).
    pub fn is_indicator(&self, f: &Observable) -> bool {
        match f {
            Observable::Step(s) => s.is_indicator(),
            Observable::Table(t) => t.iter().all(|v| v.is_zero() || *v == Real::one()),
            Observable::Tensor(ts) if ts.len() == 1 => match &self.kind {
                SystemKind::Product(a, b) => a.is_indicator(&ts[0].0) && b.is_indicator(&ts[0].1),
                _ => false,
            },
            _ => self.multiply(f, f).map(|sq| sq == *f).unwrap_or(false),
        }
    }

    /// `ν(A_0 ∩ T_g^{-1} A_1)`.
    pub fn set_correlation(&self, a0: &Observable, a1: &Observable, g: &GroupElement) -> Result<Real> {
        for a in [a0, a1] {
            self.validate(a)?;
            if !self.is_indicator(a) {
                return Err(Error::input(format!("{a} is not an event indicator")));
            }
        }
        self.expect_product(a0, &self.koopman(g, a1)?)
    }

    /// `ω(f ∘ T_g) = ω(f)`, compared exactly (complex means for trig).
    pub fn check_measure_preserving(&self, g: &GroupElement, f: &Observable) -> Result<bool> {
        let moved = self.koopman(g, f)?;
        Ok(match (f, &moved) {
            (Observable::Trig(a), Observable::Trig(b)) => {
                let (x, y) = (a.mean(), b.mean());
                x.re.approx_eq(&y.re, 1e-12) && x.im.approx_eq(&y.im, 1e-12)
            }
            _ => self.expect(f)?.approx_eq(&self.expect(&moved)?, 1e-12),
        })
    }

    /// `f ∘ T_e = f`.
    pub fn identity_acts_trivially(&self, f: &Observable) -> Result<bool> {
        Ok(self.koopman(&self.group.identity(), f)? == *f)
    }

    pub fn precision_note(&self) -> String {
        match &self.kind {
            SystemKind::Rotation { alpha } => {
                let notes: Vec<&str> = alpha.iter().map(Angle::precision_note).collect();
                notes.join("; ")
            }
            SystemKind::Product(a, b) => format!("{} | {}", a.precision_note(), b.precision_note()),
            _ => "exact".into(),
        }
    }
}

fn real_part(c: trig::Coef, label: &str) -> Result<Real> {
    if c.im.is_exact() && !c.im.is_zero() {
        return Err(Error::input(format!("complex mean {}+{}i in {label}", c.re, c.im)));
    }
    if !c.im.is_exact() && c.im.abs().to_f64() > 1e-9 {
        return Err(Error::input(format!("complex mean {}+{}i in {label}", c.re, c.im)));
    }
    Ok(c.re)
}

/// Frequency of `e_k ∘ A^g`, that is `(Aᵀ)^g k`.
pub fn orbit_frequency(matrix: &BigMatrix, k: &[i64], g: u64) -> Vec<BigInt> {
    let p = trig::mat_pow(matrix, g);
    let n = k.len();
    (0..n).map(|j| (0..n).map(|i| &p[i][j] * BigInt::from(k[i])).sum()).collect()
}
