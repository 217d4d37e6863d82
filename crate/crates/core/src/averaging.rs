//! Følner averages of bounded group functions, densities and density
//! limits, and the equivalences between density limits and averages.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dynamics::{MPSystem, Observable};
use crate::error::{Error, Result};
use crate::group::{FiniteSubset, FolnerSequence, GroupElement};
use crate::real::{tree_reduce, Real};
use crate::series::{Series, Trend, TrendOutcome};

/// A real inner-product space value.
pub trait HilbertVector: Clone + fmt::Debug + Send + Sync {
    /// Whether sums should be built explicitly. Values whose sums are
    /// expensive to represent compute `‖Σ v‖²` from pairwise inner products.
    const MATERIALIZE_SUMS: bool;

    fn zero_like(&self) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn scale(&self, c: &Real) -> Self;
    fn inner(&self, other: &Self) -> Real;
    fn is_exact(&self) -> bool;

    fn norm_sq(&self) -> Real {
        self.inner(self)
    }

    fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&Real::int(-1)))
    }
}

impl HilbertVector for Real {
    const MATERIALIZE_SUMS: bool = true;

    fn zero_like(&self) -> Self {
        Real::zero()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn scale(&self, c: &Real) -> Self {
        self * c
    }
    fn inner(&self, other: &Self) -> Real {
        self * other
    }
    fn is_exact(&self) -> bool {
        Real::is_exact(self)
    }
}

/// A vector in a finite-dimensional coordinate space.
#[derive(Clone, Debug, PartialEq)]
pub struct Coords(pub Vec<Real>);

impl Coords {
    pub fn basis(dim: usize, i: usize, c: Real) -> Coords {
        let mut v = vec![Real::zero(); dim];
        v[i] = c;
        Coords(v)
    }
}

impl HilbertVector for Coords {
    const MATERIALIZE_SUMS: bool = true;

    fn zero_like(&self) -> Self {
        Coords(vec![Real::zero(); self.0.len()])
    }
    fn add(&self, other: &Self) -> Self {
        Coords(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
    fn scale(&self, c: &Real) -> Self {
        Coords(self.0.iter().map(|a| a * c).collect())
    }
    fn inner(&self, other: &Self) -> Real {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
    fn is_exact(&self) -> bool {
        self.0.iter().all(Real::is_exact)
    }
}

/// An observable viewed as an element of `L²(ν)`; inner products go through
/// the expectation oracle.
#[derive(Clone, Debug)]
pub struct L2Vector {
    pub system: Arc<MPSystem>,
    pub f: Observable,
}

impl HilbertVector for L2Vector {
    const MATERIALIZE_SUMS: bool = false;

    fn zero_like(&self) -> Self {
        let f = self.system.constant_like(&self.f, Real::zero()).expect("validated observable");
        L2Vector { system: self.system.clone(), f }
    }
    fn add(&self, other: &Self) -> Self {
        let f = self.system.add(&self.f, &other.f).expect("same algebra");
        L2Vector { system: self.system.clone(), f }
    }
    fn scale(&self, c: &Real) -> Self {
        L2Vector { system: self.system.clone(), f: self.system.scale(&self.f, c) }
    }
    fn inner(&self, other: &Self) -> Real {
        self.system.expect_product(&self.f, &other.f).expect("same algebra")
    }
    fn is_exact(&self) -> bool {
        self.f.is_exact()
    }
}

/// `‖Σ v_i‖²`.
pub fn norm_sq_of_sum<V: HilbertVector>(values: &[V]) -> Real {
    if values.is_empty() {
        return Real::zero();
    }
    if V::MATERIALIZE_SUMS {
        return tree_reduce(values.to_vec(), |a, b| a.add(&b)).expect("nonempty").norm_sq();
    }
    let mut tracker = SumTracker::new();
    for v in values {
        tracker.push(v.clone());
    }
    tracker.norm_sq()
}

const PARALLEL_CUTOFF: usize = 256;

/// Running `‖Σ v‖²` for a growing family:
/// `S_n = S_{n-1} + 2 Σ_old ⟨new, old⟩ + ⟨new, new⟩` when sums are virtual.
#[derive(Clone, Debug)]
pub struct SumTracker<V: HilbertVector> {
    sum: Option<V>,
    items: Vec<V>,
    norm_sq: Real,
}

impl<V: HilbertVector> Default for SumTracker<V> {
    fn default() -> Self {
        SumTracker::new()
    }
}

impl<V: HilbertVector> SumTracker<V> {
    pub fn new() -> Self {
        SumTracker { sum: None, items: Vec::new(), norm_sq: Real::zero() }
    }

    pub fn push(&mut self, v: V) {
        if V::MATERIALIZE_SUMS {
            self.sum = Some(match self.sum.take() {
                Some(s) => s.add(&v),
                None => v,
            });
        } else {
            // Collected in order so float reductions do not depend on scheduling.
            let cross: Vec<Real> = if self.items.len() >= PARALLEL_CUTOFF {
                self.items.par_iter().map(|o| v.inner(o)).collect()
            } else {
                self.items.iter().map(|o| v.inner(o)).collect()
            };
            let cross: Real = cross.into_iter().sum();
            self.norm_sq += cross * Real::int(2) + v.norm_sq();
            self.items.push(v);
        }
    }

    pub fn norm_sq(&self) -> Real {
        if V::MATERIALIZE_SUMS {
            self.sum.as_ref().map(V::norm_sq).unwrap_or_else(Real::zero)
        } else {
            self.norm_sq.clone()
        }
    }

    pub fn clear(&mut self) {
        *self = SumTracker::new();
    }
}

/// A bounded function on the acting group.
#[derive(Clone)]
pub struct GroupFunction<V> {
    eval: Arc<dyn Fn(&GroupElement) -> V + Send + Sync>,
    pub sup_bound: Real,
    pub label: String,
}

impl<V> fmt::Debug for GroupFunction<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupFunction({}, sup ≤ {})", self.label, self.sup_bound)
    }
}

impl<V: HilbertVector> GroupFunction<V> {
    pub fn new(
        label: impl Into<String>,
        sup_bound: Real,
        eval: impl Fn(&GroupElement) -> V + Send + Sync + 'static,
    ) -> Self {
        GroupFunction { eval: Arc::new(eval), sup_bound, label: label.into() }
    }

    pub fn eval(&self, g: &GroupElement) -> V {
        (self.eval)(g)
    }

    /// Evaluates and checks the declared bound.
    pub fn checked_eval(&self, g: &GroupElement) -> Result<V> {
        let v = self.eval(g);
        let b2 = self.sup_bound.square();
        if !v.norm_sq().le_with_slack(&b2, 1e-12) {
            return Err(Error::InvariantViolation(format!(
                "{} exceeds its declared bound {} at {g}",
                self.label, self.sup_bound
            )));
        }
        Ok(v)
    }

    /// `g ↦ f(g + h)`.
    pub fn shifted(&self, h: &GroupElement) -> GroupFunction<V>
    where
        V: 'static,
    {
        let inner = self.eval.clone();
        let label = format!("{}(· + {h})", self.label);
        let h = h.clone();
        GroupFunction { eval: Arc::new(move |g| inner(&g.plus(&h))), sup_bound: self.sup_bound.clone(), label }
    }
}

impl GroupFunction<Real> {
    pub fn indicator(label: impl Into<String>, pred: impl Fn(&GroupElement) -> bool + Send + Sync + 'static) -> Self {
        GroupFunction::new(label, Real::one(), move |g| if pred(g) { Real::one() } else { Real::zero() })
    }

    pub fn constant(c: Real) -> Self {
        let b = c.abs();
        GroupFunction::new(format!("constant {c}"), b, move |_| c.clone())
    }

    /// Indicator of the perfect squares `{0, 1, 4, 9, ...}` in `Z`.
    pub fn squares() -> Self {
        GroupFunction::indicator("squares", |g| is_perfect_square(g.0[0]))
    }

    /// Indicator of the perfect cubes in `Z`.
    pub fn cubes() -> Self {
        GroupFunction::indicator("cubes", |g| is_perfect_cube(g.0[0]))
    }

    pub fn evens() -> Self {
        GroupFunction::indicator("evens", |g| g.0[0] % 2 == 0)
    }
}

impl GroupFunction<Coords> {
    /// `n ↦ (-1)^n e_1` in `R^dim`.
    pub fn alternating(dim: usize) -> Self {
        GroupFunction::new("alternating", Real::one(), move |g| {
            let s = if g.0[0].rem_euclid(2) == 0 { 1 } else { -1 };
            Coords::basis(dim, 0, Real::int(s))
        })
    }

    pub fn constant_vector(c: Coords) -> Self {
        let b = c.norm_sq().sqrt();
        GroupFunction::new("constant vector", b, move |_| c.clone())
    }

    /// Lifts a scalar function to the first coordinate of `R^dim`.
    pub fn from_scalar(f: GroupFunction<Real>, dim: usize) -> Self {
        let label = f.label.clone();
        let bound = f.sup_bound.clone();
        GroupFunction::new(label, bound, move |g| Coords::basis(dim, 0, f.eval(g)))
    }
}

pub fn is_perfect_square(n: i64) -> bool {
    if n < 0 {
        return false;
    }
    let r = (n as f64).sqrt() as i64;
    (r.saturating_sub(1)..=r + 1).any(|s| s >= 0 && s * s == n)
}

pub fn is_perfect_cube(n: i64) -> bool {
    let r = (n.abs() as f64).cbrt().round() as i64;
    (r.saturating_sub(1)..=r + 1).any(|s| s.checked_pow(3) == Some(n.abs()))
}

/// Visits `Λ_1..Λ_{n_max}`. For nested sequences only the new elements are
/// passed; otherwise the whole set is passed with `reset = true`.
pub fn scan_sequence(
    seq: &FolnerSequence,
    n_max: usize,
    mut visit: impl FnMut(usize, &Real, &[GroupElement], bool) -> Result<()>,
) -> Result<()> {
    let nested = seq.is_nested();
    for n in 1..=n_max {
        let mu = seq.measure(n)?;
        if mu.is_zero() {
            return Err(Error::InvariantViolation(format!("μ(Λ_{n}) = 0 for `{}`", seq.description)));
        }
        if nested {
            visit(n, &mu, &seq.increment(n)?, n == 1)?;
        } else {
            visit(n, &mu, seq.set(n)?.elements(), true)?;
        }
    }
    Ok(())
}

/// `(1/μ(Λ)) ∫_Λ f dμ`; with uniform weights this is the mean over elements.
pub fn folner_average<V: HilbertVector>(f: &GroupFunction<V>, set: &FiniteSubset) -> Result<V> {
    if set.is_empty() || set.measure().is_zero() {
        return Err(Error::InvariantViolation("average over a set of measure zero".into()));
    }
    let values = set.elements().iter().map(|g| f.checked_eval(g)).collect::<Result<Vec<_>>>()?;
    let sum = tree_reduce(values, |a, b| a.add(&b)).expect("nonempty");
    Ok(sum.scale(&Real::ratio(1, set.len() as i64)))
}

#[derive(Clone, Debug)]
pub struct AverageReport<V> {
    pub n: usize,
    pub mu: Real,
    pub value: V,
    pub count: usize,
}

/// `folner_average(f, Λ_n)` for `n = 1..=n_max`, incrementally when nested.
pub fn average_series<V: HilbertVector>(
    f: &GroupFunction<V>,
    seq: &FolnerSequence,
    n_max: usize,
) -> Result<Vec<AverageReport<V>>> {
    let mut out = Vec::with_capacity(n_max);
    let mut sum: Option<V> = None;
    let mut count = 0usize;
    scan_sequence(seq, n_max, |n, mu, new, reset| {
        if reset {
            sum = None;
            count = 0;
        }
        for g in new {
            let v = f.checked_eval(g)?;
            sum = Some(match sum.take() {
                Some(s) => s.add(&v),
                None => v,
            });
        }
        count += new.len();
        let s = sum.clone().ok_or_else(|| Error::InvariantViolation(format!("Λ_{n} is empty")))?;
        out.push(AverageReport { n, mu: mu.clone(), value: s.scale(&Real::ratio(1, count as i64)), count });
        Ok(())
    })?;
    Ok(out)
}

/// Scalar average series as a one-column [`Series`].
pub fn scalar_average_series(f: &GroupFunction<Real>, seq: &FolnerSequence, n_max: usize) -> Result<Series> {
    let mut s = Series::new(format!("average of {}", f.label), &["value"]);
    for r in average_series(f, seq, n_max)? {
        s.push(r.n, r.mu, vec![r.value]);
    }
    Ok(s)
}

/// `μ(Λ_n ∩ S) / μ(Λ_n)`.
pub fn density_of(pred: impl Fn(&GroupElement) -> bool, seq: &FolnerSequence, n: usize) -> Result<Real> {
    let set = seq.set(n)?;
    let hits = set.elements().iter().filter(|g| pred(g)).count();
    Ok(Real::ratio(hits as i64, set.len() as i64))
}

pub fn density_series(pred: impl Fn(&GroupElement) -> bool, seq: &FolnerSequence, n_max: usize) -> Result<Series> {
    let mut s = Series::new("density", &["value"]);
    let (mut hits, mut count) = (0i64, 0i64);
    scan_sequence(seq, n_max, |n, mu, new, reset| {
        if reset {
            hits = 0;
            count = 0;
        }
        hits += new.iter().filter(|g| pred(g)).count() as i64;
        count += new.len() as i64;
        s.push(n, mu.clone(), vec![Real::ratio(hits, count)]);
        Ok(())
    })?;
    Ok(s)
}

/// `ε = 2^{-1}, ..., 2^{-6}`.
pub fn default_eps_grid() -> Vec<Real> {
    (1..=6).map(|k| Real::ratio(1, 1 << k)).collect()
}

#[derive(Clone, Debug)]
pub struct DensityReport {
    pub eps: Vec<Real>,
    /// One column per `ε`, holding `μ(Λ_n ∩ S_ε)/μ(Λ_n)`.
    pub series: Series,
    pub outcomes: Vec<TrendOutcome>,
    pub passed: bool,
}

fn eps_column(e: &Real) -> String {
    format!("eps={e}")
}

/// Densities of `S_ε = {h : ‖f(h) - a‖ ≥ ε}` along the sequence.
pub fn density_limit_check<V: HilbertVector>(
    f: &GroupFunction<V>,
    a: &V,
    seq: &FolnerSequence,
    eps: &[Real],
    n_max: usize,
    trend: &Trend,
) -> Result<DensityReport> {
    let eps_sq: Vec<Real> = eps.iter().map(Real::square).collect();
    let names: Vec<String> = eps.iter().map(eps_column).collect();
    let cols: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut series = Series::new(format!("density limit of {}", f.label), &cols);
    let mut hits = vec![0i64; eps.len()];
    let mut count = 0i64;
    scan_sequence(seq, n_max, |n, mu, new, reset| {
        if reset {
            hits.iter_mut().for_each(|h| *h = 0);
            count = 0;
        }
        for g in new {
            let d = f.checked_eval(g)?.sub(a).norm_sq();
            for (h, e2) in hits.iter_mut().zip(&eps_sq) {
                if d >= *e2 {
                    *h += 1;
                }
            }
        }
        count += new.len() as i64;
        series.push(n, mu.clone(), hits.iter().map(|&h| Real::ratio(h, count)).collect());
        Ok(())
    })?;
    let outcomes: Vec<TrendOutcome> = (0..eps.len()).map(|i| trend.to_zero(&series, i)).collect();
    let passed = outcomes.iter().all(|o| o.passed);
    Ok(DensityReport { eps: eps.to_vec(), series, outcomes, passed })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraCheck {
    /// `S_ε(f+g) ⊆ S_{ε/2}(f) ∪ S_{ε/2}(g)` at every tested `ε`.
    pub sum_inclusion: bool,
    /// `S_ε(βf) = S_{ε/|β|}(f)`, or empty for `β = 0`.
    pub scalar_inclusion: bool,
    /// `a ≤ b` when `f ≤ g` pointwise and exact limits are supplied.
    pub order: Option<bool>,
    pub witness: Option<String>,
}

impl AlgebraCheck {
    pub fn passed(&self) -> bool {
        self.sum_inclusion && self.scalar_inclusion && self.order != Some(false)
    }
}

/// Set-inclusion logic behind the algebra of density limits, checked on
/// `Λ_{n_max}`.
#[allow(clippy::too_many_arguments)]
pub fn density_limit_algebra_check(
    f: &GroupFunction<Real>,
    g: &GroupFunction<Real>,
    a: &Real,
    b: &Real,
    beta: &Real,
    seq: &FolnerSequence,
    eps: &[Real],
    n_max: usize,
) -> Result<AlgebraCheck> {
    let set = seq.set(n_max)?;
    let mut check = AlgebraCheck { sum_inclusion: true, scalar_inclusion: true, order: None, witness: None };
    let mut pointwise_le = true;
    let half = Real::ratio(1, 2);
    for h in set.elements() {
        let (fv, gv) = (f.checked_eval(h)?, g.checked_eval(h)?);
        pointwise_le &= fv <= gv;
        let df = (&fv - a).abs();
        let dg = (&gv - b).abs();
        let dsum = (&fv + &gv - a - b).abs();
        let dscaled = (beta * &fv - beta * a).abs();
        for e in eps {
            let e_half = e * &half;
            if dsum >= *e && df < e_half && dg < e_half {
                check.sum_inclusion = false;
                check.witness.get_or_insert_with(|| format!("sum inclusion fails at h = {h}, ε = {e}"));
            }
            let in_scaled = dscaled >= *e;
            let expected = !beta.is_zero() && df >= e / &beta.abs();
            if in_scaled != expected {
                check.scalar_inclusion = false;
                check.witness.get_or_insert_with(|| format!("scalar inclusion fails at h = {h}, ε = {e}"));
            }
        }
    }
    if pointwise_le {
        check.order = Some(a <= b);
    }
    Ok(check)
}

/// Averages below `τ` or densities below `τ` at every `ε`.
#[derive(Clone, Debug)]
pub struct KvnReport {
    pub density: DensityReport,
    pub average: Series,
    pub average_outcome: TrendOutcome,
    pub consistent: bool,
}

impl KvnReport {
    pub fn density_to_zero(&self) -> bool {
        self.density.passed
    }

    pub fn average_to_zero(&self) -> bool {
        self.average_outcome.passed
    }
}

/// For bounded `f ≥ 0`: density limit 0 versus averages tending to 0.
pub fn kvn_equivalence(
    f: &GroupFunction<Real>,
    seq: &FolnerSequence,
    eps: &[Real],
    n_max: usize,
    trend: &Trend,
) -> Result<KvnReport> {
    if let Some(bad) = seq.set(n_max)?.elements().iter().find(|g| f.eval(g).is_negative()) {
        return Err(Error::input(format!("{} is negative at {bad}", f.label)));
    }
    let average = scalar_average_series(f, seq, n_max)?;
    let density = density_limit_check(f, &Real::zero(), seq, eps, n_max, trend)?;
    let average_outcome = trend.to_zero(&average, 0);
    let consistent = density.passed == average_outcome.passed;
    Ok(KvnReport { density, average, average_outcome, consistent })
}

#[derive(Clone, Debug)]
pub struct PairedReport {
    /// Columns `square` and `abs`.
    pub series: Series,
    pub square: TrendOutcome,
    pub abs: TrendOutcome,
}

impl PairedReport {
    pub fn consistent(&self) -> bool {
        self.square.passed == self.abs.passed
    }
}

/// Averages of `f²` and `|f|` along the sequence.
pub fn square_abs_equivalence(
    f: &GroupFunction<Real>,
    seq: &FolnerSequence,
    n_max: usize,
    trend_square: &Trend,
    trend_abs: &Trend,
) -> Result<PairedReport> {
    let mut series = Series::new(format!("square and abs averages of {}", f.label), &["square", "abs"]);
    let (mut sq, mut ab) = (Real::zero(), Real::zero());
    let mut count = 0i64;
    scan_sequence(seq, n_max, |n, mu, new, reset| {
        if reset {
            sq = Real::zero();
            ab = Real::zero();
            count = 0;
        }
        for g in new {
            let v = f.checked_eval(g)?;
            sq += v.square();
            ab += v.abs();
        }
        count += new.len() as i64;
        let inv = Real::ratio(1, count);
        series.push(n, mu.clone(), vec![&sq * &inv, &ab * &inv]);
        Ok(())
    })?;
    let square = trend_square.to_zero(&series, 0);
    let abs = trend_abs.to_zero(&series, 1);
    Ok(PairedReport { series, square, abs })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanSquareVerdict {
    Pass,
    /// The hypotheses do not hold, so nothing is asserted.
    VacuousPass,
    Fail,
}

impl fmt::Display for MeanSquareVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeanSquareVerdict::Pass => "PASS",
            MeanSquareVerdict::VacuousPass => "VACUOUS-PASS",
            MeanSquareVerdict::Fail => "FAIL",
        })
    }
}

#[derive(Clone, Debug)]
pub struct MeanSquareReport {
    /// Columns `avg_f`, `avg_f2`, `avg_centered_sq`.
    pub series: Series,
    pub hypothesis: bool,
    pub conclusion: bool,
    pub verdict: MeanSquareVerdict,
}

/// avg f → β and avg f² → β² imply avg (f-β)² → 0. The identity
/// `avg (f-β)² = avg f² - 2β avg f + β²` is checked at every index.
pub fn mean_square_identity_check(
    f: &GroupFunction<Real>,
    beta: &Real,
    seq: &FolnerSequence,
    n_max: usize,
    trend: &Trend,
) -> Result<MeanSquareReport> {
    let mut series =
        Series::new(format!("mean square identity for {}", f.label), &["avg_f", "avg_f2", "avg_centered_sq"]);
    let (mut s1, mut s2, mut sc) = (Real::zero(), Real::zero(), Real::zero());
    let mut count = 0i64;
    let two = Real::int(2);
    scan_sequence(seq, n_max, |n, mu, new, reset| {
        if reset {
            s1 = Real::zero();
            s2 = Real::zero();
            sc = Real::zero();
            count = 0;
        }
        for g in new {
            let v = f.checked_eval(g)?;
            s2 += v.square();
            sc += (&v - beta).square();
            s1 += v;
        }
        count += new.len() as i64;
        let inv = Real::ratio(1, count);
        let (a1, a2, ac) = (&s1 * &inv, &s2 * &inv, &sc * &inv);
        let rhs = &a2 - &two * beta * &a1 + beta.square();
        let holds = if ac.is_exact() && rhs.is_exact() { ac == rhs } else { ac.approx_eq(&rhs, 1e-9) };
        if !holds {
            return Err(Error::IdentityViolation(format!(
                "avg (f-β)² = {ac} but avg f² - 2β avg f + β² = {rhs} at n = {n}"
            )));
        }
        series.push(n, mu.clone(), vec![a1, a2, ac]);
        Ok(())
    })?;
    let hypothesis = trend.evaluate(&series, 0, beta).passed && trend.evaluate(&series, 1, &beta.square()).passed;
    let conclusion = trend.to_zero(&series, 2).passed;
    let verdict = match (hypothesis, conclusion) {
        (false, _) => MeanSquareVerdict::VacuousPass,
        (true, true) => MeanSquareVerdict::Pass,
        (true, false) => MeanSquareVerdict::Fail,
    };
    Ok(MeanSquareReport { series, hypothesis, conclusion, verdict })
}

/// `∫_Λ f = ∫_{Λ∩S} f + ∫_{Λ\S} f`, compared exactly for rational values.
pub fn split_sum_identity_holds(
    f: &GroupFunction<Real>,
    set: &FiniteSubset,
    pred: impl Fn(&GroupElement) -> bool,
) -> bool {
    let all: Real = set.elements().iter().map(|g| f.eval(g)).sum();
    let inside: Real = set.elements().iter().filter(|g| pred(g)).map(|g| f.eval(g)).sum();
    let outside: Real = set.elements().iter().filter(|g| !pred(g)).map(|g| f.eval(g)).sum();
    all == inside + outside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupModel;
    use proptest::prelude::*;

    fn z_initial() -> FolnerSequence {
        FolnerSequence::initial(GroupModel::integers())
    }

    fn z_symmetric() -> FolnerSequence {
        FolnerSequence::symmetric(GroupModel::integers())
    }

    fn isqrt(n: i64) -> i64 {
        (1..).take_while(|k| k * k <= n).last().unwrap_or(0)
    }

    #[test]
    fn averages() {
        let z = GroupModel::integers();
        let set = FiniteSubset::interval(&z, -7, 7).unwrap();
        assert_eq!(folner_average(&GroupFunction::constant(Real::ratio(3, 5)), &set).unwrap(), Real::ratio(3, 5));
        let id = GroupFunction::new("id", Real::int(7), |g: &GroupElement| Real::int(g.0[0]));
        assert_eq!(folner_average(&id, &set).unwrap(), Real::zero());
        let hundred = FiniteSubset::interval(&z, 1, 100).unwrap();
        assert_eq!(folner_average(&GroupFunction::squares(), &hundred).unwrap(), Real::ratio(10, 100));
        let empty = FiniteSubset::new(&z, Vec::new()).unwrap();
        assert!(matches!(folner_average(&id, &empty), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn bound_is_checked() {
        let z = GroupModel::integers();
        let liar = GroupFunction::new("liar", Real::one(), |_: &GroupElement| Real::int(2));
        let set = FiniteSubset::interval(&z, 0, 3).unwrap();
        assert!(folner_average(&liar, &set).is_err());
    }

    #[test]
    fn vector_average_is_coordinatewise() {
        let z = GroupModel::integers();
        let f = GroupFunction::new("pair", Real::int(101), |g: &GroupElement| {
            Coords(vec![Real::int(g.0[0]), Real::int(g.0[0] * g.0[0])])
        });
        let set = FiniteSubset::interval(&z, 1, 10).unwrap();
        let avg = folner_average(&f, &set).unwrap();
        assert_eq!(avg, Coords(vec![Real::ratio(55, 10), Real::ratio(385, 10)]));
    }

    #[test]
    fn densities() {
        let seq = z_initial();
        assert_eq!(density_of(|g| is_perfect_square(g.0[0]), &seq, 10_000).unwrap(), Real::ratio(100, 10_000));
        assert_eq!(density_of(|_| true, &seq, 37).unwrap(), Real::one());
        assert_eq!(density_of(|_| false, &seq, 37).unwrap(), Real::zero());
        let s = density_series(|g| is_perfect_square(g.0[0]), &seq, 500).unwrap();
        for p in &s.points {
            assert_eq!(p.values[0], Real::ratio(isqrt(p.n as i64), p.n as i64));
        }
    }

    #[test]
    fn density_limits() {
        let seq = z_initial();
        let eps = [Real::ratio(1, 2)];
        // Known rate 1/√n.
        let rate = Trend::from_rate(Real::ratio(1, 44));
        let r = density_limit_check(&GroupFunction::squares(), &Real::zero(), &seq, &eps, 2000, &rate).unwrap();
        assert!(r.passed);
        assert_eq!(r.series.value_at(1000).unwrap(), &Real::ratio(31, 1000));

        let c = GroupFunction::constant(Real::ratio(1, 3));
        let grid = default_eps_grid();
        let r = density_limit_check(&c, &Real::ratio(1, 3), &seq, &grid, 50, &Trend::default()).unwrap();
        assert!(r.passed);
        assert!(r.series.points.iter().all(|p| p.values.iter().all(Real::is_zero)));
        let r = density_limit_check(&c, &Real::ratio(4, 3), &seq, &eps, 50, &Trend::default()).unwrap();
        assert!(!r.passed);
        assert!(r.series.points.iter().all(|p| p.values[0] == Real::one()));
    }

    #[test]
    fn density_algebra() {
        let seq = z_initial();
        let grid = default_eps_grid();
        let sq = GroupFunction::squares();
        let cu = GroupFunction::cubes();
        let r = density_limit_algebra_check(&sq, &cu, &Real::zero(), &Real::zero(), &Real::int(3), &seq, &grid, 3000)
            .unwrap();
        assert!(r.sum_inclusion && r.scalar_inclusion, "{r:?}");
        let r = density_limit_algebra_check(&sq, &cu, &Real::zero(), &Real::zero(), &Real::zero(), &seq, &grid, 300)
            .unwrap();
        assert!(r.scalar_inclusion);
        let quarter = GroupFunction::new("sq + 1/4", Real::int(2), |g: &GroupElement| {
            Real::ratio(1, 4) + if is_perfect_square(g.0[0]) { Real::one() } else { Real::zero() }
        });
        let r = density_limit_algebra_check(
            &sq,
            &quarter,
            &Real::zero(),
            &Real::ratio(1, 4),
            &Real::one(),
            &seq,
            &grid,
            300,
        )
        .unwrap();
        assert_eq!(r.order, Some(true));
        assert!(r.passed());
    }

    #[test]
    fn kvn_examples() {
        let seq = z_initial();
        let grid = default_eps_grid();
        let t = Trend::default();
        let rate = Trend::from_rate(Real::ratio(1, 100));
        let r = kvn_equivalence(&GroupFunction::squares(), &seq, &grid, 10_000, &rate).unwrap();
        assert!(r.density_to_zero() && r.average_to_zero() && r.consistent);
        for p in &r.average.points {
            assert_eq!(p.values[0], r.density.series.value_at(p.n).unwrap().clone());
        }
        let r = kvn_equivalence(&GroupFunction::constant(Real::ratio(1, 2)), &seq, &grid, 200, &t).unwrap();
        assert!(!r.density_to_zero() && !r.average_to_zero() && r.consistent);
        let r = kvn_equivalence(&GroupFunction::evens(), &seq, &grid, 200, &t).unwrap();
        assert!(!r.density_to_zero() && !r.average_to_zero() && r.consistent);
        assert_eq!(r.average.value_at(200).unwrap(), &Real::ratio(1, 2));
        let neg = GroupFunction::constant(Real::int(-1));
        assert!(matches!(kvn_equivalence(&neg, &seq, &grid, 10, &t), Err(Error::Input(_))));
    }

    #[test]
    fn square_abs_examples() {
        let seq = z_initial();
        let t = Trend::default();
        let rate = Trend::from_rate(Real::ratio(1, 100));
        let r = square_abs_equivalence(&GroupFunction::squares(), &seq, 10_000, &rate, &rate).unwrap();
        assert!(r.square.passed && r.abs.passed && r.consistent());
        let r = square_abs_equivalence(&GroupFunction::constant(Real::one()), &seq, 100, &t, &t).unwrap();
        assert!(!r.square.passed && !r.abs.passed && r.consistent());

        // f(n) = 1/√n: avg |f| ≈ 2/√N and avg f² = H_N / N.
        let inv_sqrt =
            GroupFunction::new("1/sqrt n", Real::one(), |g: &GroupElement| Real::float(1.0 / (g.0[0] as f64).sqrt()));
        let n = 10_000;
        let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
        let sqrt_sum: f64 = (1..=n).map(|k| 1.0 / (k as f64).sqrt()).sum();
        let ts = Trend::from_rate(Real::float(harmonic / n as f64));
        let ta = Trend::from_rate(Real::float(2.0 / (n as f64).sqrt()));
        let r = square_abs_equivalence(&inv_sqrt, &seq, n as usize, &ts, &ta).unwrap();
        assert!(r.square.passed && r.abs.passed && r.consistent());
        let last = &r.series.points.last().unwrap().values;
        assert!(last[0].approx_eq(&Real::float(harmonic / n as f64), 1e-12));
        assert!(last[1].approx_eq(&Real::float(sqrt_sum / n as f64), 1e-12));
    }

    #[test]
    fn mean_square_examples() {
        let seq = z_initial();
        let t = Trend::default();
        let beta = Real::ratio(2, 3);
        let r = mean_square_identity_check(&GroupFunction::constant(beta.clone()), &beta, &seq, 100, &t).unwrap();
        assert_eq!(r.verdict, MeanSquareVerdict::Pass);
        assert!(r
            .series
            .points
            .iter()
            .all(|p| p.values[0] == beta && p.values[1] == beta.square() && p.values[2].is_zero()));

        let c = Real::ratio(1, 2);
        let alt = {
            let (b, c) = (beta.clone(), c.clone());
            GroupFunction::new(
                "alt",
                Real::int(2),
                move |g: &GroupElement| {
                    if g.0[0] % 2 == 0 {
                        &b + &c
                    } else {
                        &b - &c
                    }
                },
            )
        };
        let r = mean_square_identity_check(&alt, &beta, &seq, 1000, &t).unwrap();
        assert_eq!(r.verdict, MeanSquareVerdict::VacuousPass);
        assert_eq!(r.series.value_at(1000).map(|_| r.series.points[999].values[2].clone()), Some(c.square()));

        let bumped = {
            let b = beta.clone();
            GroupFunction::new("beta + squares", Real::int(2), move |g: &GroupElement| {
                if is_perfect_square(g.0[0]) {
                    &b + Real::one()
                } else {
                    b.clone()
                }
            })
        };
        let rate = Trend::from_rate(Real::ratio(1, 100));
        let r = mean_square_identity_check(&bumped, &beta, &seq, 10_000, &rate).unwrap();
        assert_eq!(r.verdict, MeanSquareVerdict::Pass);
    }

    #[test]
    fn symmetric_sequence_average_is_incremental() {
        let seq = z_symmetric();
        let f = GroupFunction::new("cube", Real::int(1000), |g: &GroupElement| Real::int(g.0[0].pow(3)));
        let reports = average_series(&f, &seq, 10).unwrap();
        assert!(reports.iter().all(|r| r.value.is_zero()));
        assert_eq!(reports[9].count, 21);
    }

    #[test]
    fn perfect_powers() {
        let squares: Vec<i64> = (-5..=50).filter(|&n| is_perfect_square(n)).collect();
        assert_eq!(squares, vec![0, 1, 4, 9, 16, 25, 36, 49]);
        let cubes: Vec<i64> = (-30..=30).filter(|&n| is_perfect_cube(n)).collect();
        assert_eq!(cubes, vec![-27, -8, -1, 0, 1, 8, 27]);
    }

    #[test]
    fn virtual_sums_match_materialized() {
        let sys = Arc::new(MPSystem::fair_coin(1));
        let vals: Vec<L2Vector> = (0..6)
            .map(|i| {
                let site = Observable::single_site(1, (i % 2) as u32);
                let f = sys.koopman(&GroupElement::scalar(i % 3), &site).unwrap();
                L2Vector { system: sys.clone(), f }
            })
            .collect();
        let direct = {
            let mut s = vals[0].clone();
            for v in &vals[1..] {
                s = s.add(v);
            }
            s.norm_sq()
        };
        assert_eq!(norm_sq_of_sum(&vals), direct);
    }

    proptest! {
        #[test]
        fn average_is_linear(xs in proptest::collection::vec(-20i64..20, 1..30), c in -5i64..5) {
            let z = GroupModel::integers();
            let set = FiniteSubset::interval(&z, 0, xs.len() as i64 - 1).unwrap();
            let table = Arc::new(xs.clone());
            let t1 = table.clone();
            let f = GroupFunction::new("table", Real::int(20), move |g: &GroupElement| Real::int(t1[g.0[0] as usize]));
            let t2 = table.clone();
            let g = GroupFunction::new("square", Real::int(400), move |h: &GroupElement| Real::int(t2[h.0[0] as usize].pow(2)));
            let (f2, g2) = (f.clone(), g.clone());
            let cr = Real::int(c);
            let comb = GroupFunction::new("comb", Real::int(3000), move |h: &GroupElement| f2.eval(h) * &cr + g2.eval(h));
            let lhs = folner_average(&comb, &set).unwrap();
            let rhs = folner_average(&f, &set).unwrap() * Real::int(c) + folner_average(&g, &set).unwrap();
            prop_assert_eq!(lhs, rhs);
            prop_assert!(split_sum_identity_holds(&f, &set, |h| h.0[0] % 3 == 0));
        }

        #[test]
        fn density_is_monotone(n in 1usize..300, m in 2i64..7) {
            let seq = z_initial();
            let small = density_of(|g| g.0[0] % (2 * m) == 0, &seq, n).unwrap();
            let big = density_of(|g| g.0[0] % m == 0, &seq, n).unwrap();
            prop_assert!(small <= big);
        }
    }
}
