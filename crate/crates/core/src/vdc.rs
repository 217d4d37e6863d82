//! The van der Corput inequality chain and the sequence form of the van der
//! Corput lemma, as exactly checkable inequalities and finite-n verdicts.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::averaging::{norm_sq_of_sum, scan_sequence, GroupFunction, HilbertVector, SumTracker};
use crate::error::{Error, Result};
use crate::group::{box_points, quotient_set, FiniteSubset, FolnerSequence, GroupElement, GroupModel};
use crate::real::Real;
use crate::series::{Series, Trend, TrendOutcome, Verdict};

/// Relative slack allowed on float paths.
pub const FLOAT_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityReport {
    pub name: &'static str,
    pub lhs: Real,
    pub rhs: Real,
}

impl InequalityReport {
    pub fn holds(&self) -> bool {
        self.lhs.le_with_slack(&self.rhs, FLOAT_SLACK)
    }

    /// The reversed comparison, used to check that a harness notices a
    /// corrupted inequality.
    pub fn flipped_holds(&self) -> bool {
        self.rhs.le_with_slack(&self.lhs, FLOAT_SLACK)
    }

    fn checked(self, witness: impl FnOnce() -> String) -> Result<Self> {
        if self.holds() {
            Ok(self)
        } else {
            Err(Error::inequality(self.name, &self.lhs, &self.rhs, witness()))
        }
    }
}

impl fmt::Display for InequalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ≤ {}", self.name, self.lhs, self.rhs)
    }
}

fn describe_set(set: &FiniteSubset) -> String {
    let shown: Vec<String> = set.elements().iter().take(40).map(|g| g.to_string()).collect();
    let more = if set.len() > 40 { ", ..." } else { "" };
    format!("{{{}{more}}}", shown.join(", "))
}

/// `‖∫_Λ f‖² ≤ μ(Λ) ∫_Λ ‖f‖²`.
pub fn avg_norm_inequality<V: HilbertVector>(
    model: &GroupModel,
    f: &GroupFunction<V>,
    set: &FiniteSubset,
) -> Result<InequalityReport> {
    if set.is_empty() {
        return Err(Error::InvariantViolation("empty set".into()));
    }
    let w = model.weight();
    let values: Vec<V> = set.elements().iter().map(|g| f.eval(g)).collect();
    let lhs = norm_sq_of_sum(&values) * w.square();
    let sum_sq: Real = values.iter().map(V::norm_sq).sum();
    let rhs = set.measure() * w * sum_sq;
    InequalityReport { name: "average norm inequality", lhs, rhs }.checked(|| describe_set(set))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub gap_sq: Real,
    pub bound: Real,
}

impl GapReport {
    pub fn gap(&self) -> Real {
        self.gap_sq.sqrt()
    }
}

/// `‖avg_{Λ_n} f - avg_{g∈Λ_n} avg_{h∈Λ_m} f(gh)‖ ≤ b · uniform_defect(n, m)`,
/// compared on squares.
pub fn shift_average_gap<V: HilbertVector>(
    f: &GroupFunction<V>,
    seq: &FolnerSequence,
    n: usize,
    m: usize,
) -> Result<GapReport> {
    let big = seq.set(n)?;
    let small = seq.set(m)?;
    let model = &seq.model;
    let mut single: Option<V> = None;
    let mut double: Option<V> = None;
    let add = |acc: &mut Option<V>, v: V| {
        *acc = Some(match acc.take() {
            Some(s) => s.add(&v),
            None => v,
        })
    };
    for g in big.elements() {
        add(&mut single, f.checked_eval(g)?);
        for h in small.elements() {
            add(&mut double, f.eval(&model.compose_unchecked(g, h)));
        }
    }
    let a = single.expect("nonempty").scale(&Real::ratio(1, big.len() as i64));
    let b = double.expect("nonempty").scale(&Real::ratio(1, (big.len() * small.len()) as i64));
    let gap_sq = a.sub(&b).norm_sq();
    let bound = &f.sup_bound * seq.uniform_defect(n, m)?;
    if !gap_sq.le_with_slack(&bound.square(), FLOAT_SLACK) {
        return Err(Error::inequality(
            "shift average gap",
            gap_sq.sqrt(),
            &bound,
            format!("n = {n}, m = {m}, {}", seq.description),
        ));
    }
    Ok(GapReport { gap_sq, bound })
}

/// `‖∫_{Λ₂}∫_{Λ₁} f(gh)‖² ≤ μ(Λ₂) ∫_{Λ₁}∫_{Λ₁}∫_{Λ₂} ⟨f(gh₁), f(gh₂)⟩`.
pub fn triple_avg_inequality<V: HilbertVector>(
    model: &GroupModel,
    f: &GroupFunction<V>,
    inner: &FiniteSubset,
    outer: &FiniteSubset,
) -> Result<InequalityReport> {
    if inner.is_empty() || outer.is_empty() {
        return Err(Error::InvariantViolation("empty set".into()));
    }
    let w = model.weight();
    let mut all = Vec::with_capacity(inner.len() * outer.len());
    let mut inner_norms = Real::zero();
    for g in outer.elements() {
        let row: Vec<V> = inner.elements().iter().map(|h| f.eval(&model.compose_unchecked(g, h))).collect();
        inner_norms += norm_sq_of_sum(&row);
        all.extend(row);
    }
    let lhs = norm_sq_of_sum(&all) * w.pow(4);
    let rhs = outer.measure() * w.pow(3) * inner_norms;
    InequalityReport { name: "triple average inequality", lhs, rhs }
        .checked(|| format!("Λ₁ = {}, Λ₂ = {}", describe_set(inner), describe_set(outer)))
}

#[derive(Clone, Debug)]
pub struct CorrelationSeries {
    pub h: GroupElement,
    /// Column `gamma`: `(1/μ(Λ_n)) ∫_{Λ_n} ⟨f(g), f(gh)⟩`.
    pub series: Series,
    /// Last-quartile mean.
    pub limit: Real,
}

/// `n ↦ (1/μ(Λ_n)) ∫_{Λ_n} ⟨f(g h₁), f(g h₂)⟩`.
pub fn correlation_series<V: HilbertVector>(
    f: &GroupFunction<V>,
    seq: &FolnerSequence,
    h1: &GroupElement,
    h2: &GroupElement,
    n_max: usize,
) -> Result<Series> {
    let model = &seq.model;
    let bound = f.sup_bound.square();
    let mut series = Series::new(format!("correlation of {} at ({h1}, {h2})", f.label), &["gamma"]);
    let mut sum = Real::zero();
    let mut count = 0i64;
    scan_sequence(seq, n_max, |n, mu, new, reset| {
        if reset {
            sum = Real::zero();
            count = 0;
        }
        for g in new {
            let a = f.eval(&model.compose_unchecked(g, h1));
            let b = f.eval(&model.compose_unchecked(g, h2));
            sum += a.inner(&b);
        }
        count += new.len() as i64;
        let value = &sum / Real::int(count);
        if !value.abs().le_with_slack(&bound, FLOAT_SLACK) {
            return Err(Error::InvariantViolation(format!("|γ| = {value} exceeds b² = {bound} at n = {n}")));
        }
        series.push(n, mu.clone(), vec![value]);
        Ok(())
    })?;
    Ok(series)
}

pub fn gamma_series<V: HilbertVector>(
    f: &GroupFunction<V>,
    seq: &FolnerSequence,
    h: &GroupElement,
    n_max: usize,
) -> Result<CorrelationSeries> {
    let mut series = correlation_series(f, seq, &seq.model.identity(), h, n_max)?;
    series.name = format!("gamma of {} at {h}", f.label);
    let limit = series.tail_mean(0);
    Ok(CorrelationSeries { h: h.clone(), series, limit })
}

#[derive(Clone, Debug)]
pub struct ShiftedReport {
    pub shifted: Series,
    pub gamma: CorrelationSeries,
    pub limits_agree: bool,
}

/// The shifted correlation `(1/μ)∫⟨f(gh₁), f(gh₂)⟩` against `γ_{h₁⁻¹h₂}`,
/// with the per-index bound `b² · defect(n, h₁)`.
pub fn shifted_gamma_consistency<V: HilbertVector>(
    f: &GroupFunction<V>,
    seq: &FolnerSequence,
    h1: &GroupElement,
    h2: &GroupElement,
    n_max: usize,
    tol: &Real,
) -> Result<ShiftedReport> {
    let shifted = correlation_series(f, seq, h1, h2, n_max)?;
    let gamma = gamma_series(f, seq, &seq.model.quotient(h1, h2), n_max)?;
    let b2 = f.sup_bound.square();
    for (s, g) in shifted.points.iter().zip(&gamma.series.points) {
        let diff = (&s.values[0] - &g.values[0]).abs();
        let bound = &b2 * seq.folner_defect(s.n, h1)?;
        if !diff.le_with_slack(&bound, FLOAT_SLACK) {
            return Err(Error::inequality(
                "shifted correlation bound",
                &diff,
                &bound,
                format!("n = {}, h₁ = {h1}, h₂ = {h2}", s.n),
            ));
        }
    }
    let limits_agree = (shifted.tail_mean(0) - &gamma.limit).abs() <= *tol;
    Ok(ShiftedReport { shifted, gamma, limits_agree })
}

/// Where `γ_h` comes from in the double-sum target.
#[derive(Clone)]
pub enum GammaSource {
    /// Last-quartile means of [`gamma_series`] up to `n_max`.
    Estimated {
        n_max: usize,
    },
    Closed(Arc<dyn Fn(&GroupElement) -> Real + Send + Sync>),
}

impl fmt::Debug for GammaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaSource::Estimated { n_max } => write!(f, "Estimated(n_max = {n_max})"),
            GammaSource::Closed(_) => write!(f, "Closed"),
        }
    }
}

/// Caches `γ_h` per difference element.
struct GammaTable<'a, V: HilbertVector> {
    f: &'a GroupFunction<V>,
    seq: &'a FolnerSequence,
    source: GammaSource,
    cache: HashMap<GroupElement, Real>,
}

impl<'a, V: HilbertVector> GammaTable<'a, V> {
    fn new(f: &'a GroupFunction<V>, seq: &'a FolnerSequence, source: GammaSource) -> Self {
        GammaTable { f, seq, source, cache: HashMap::new() }
    }

    fn get(&mut self, h: &GroupElement) -> Result<Real> {
        if let Some(v) = self.cache.get(h) {
            return Ok(v.clone());
        }
        let v = match &self.source {
            GammaSource::Estimated { n_max } => gamma_series(self.f, self.seq, h, *n_max)?.limit,
            GammaSource::Closed(c) => c(h),
        };
        self.cache.insert(h.clone(), v.clone());
        Ok(v)
    }
}

/// `d ↦ #{(h₁, h₂) ∈ Λ² : h₁⁻¹h₂ = d}`, closed form for lattice boxes.
pub fn difference_multiplicities(seq: &FolnerSequence, m: usize) -> Result<BTreeMap<GroupElement, i64>> {
    if let Some((a, b)) = seq.lattice_box(m) {
        let side = b - a + 1;
        let mut out = BTreeMap::new();
        if side <= 0 {
            return Ok(out);
        }
        for d in box_points(seq.model.rank(), 1 - side, side - 1) {
            let mult: i64 = d.coords().iter().map(|c| side - c.abs()).product();
            out.insert(d, mult);
        }
        return Ok(out);
    }
    Ok(set_difference_multiplicities(&seq.model, &seq.set(m)?))
}

pub fn set_difference_multiplicities(model: &GroupModel, set: &FiniteSubset) -> BTreeMap<GroupElement, i64> {
    let mut out = BTreeMap::new();
    for h1 in set.elements() {
        for h2 in set.elements() {
            *out.entry(model.quotient(h1, h2)).or_insert(0) += 1;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct TripleDoubleReport {
    /// Column `value`: `(1/μ(Λ_n)) ∫_{Λ_n}∫_{Λ_m}∫_{Λ_m} ⟨f(gh₁), f(gh₂)⟩`.
    pub series: Series,
    pub target: Real,
    pub outcome: TrendOutcome,
}

/// The triple average at fixed `m` against `∫∫ γ_{h₁⁻¹h₂}` over `Λ_m²`.
pub fn triple_to_double_limit<V: HilbertVector>(
    f: &GroupFunction<V>,
    seq: &FolnerSequence,
    m: usize,
    n_max: usize,
    source: GammaSource,
    trend: &Trend,
) -> Result<TripleDoubleReport> {
    let model = &seq.model;
    let w = model.weight().clone();
    let lambda_m = seq.set(m)?;
    let mut table = GammaTable::new(f, seq, source);
    let mut target = Real::zero();
    for (d, mult) in difference_multiplicities(seq, m)? {
        target += table.get(&d)? * Real::int(mult);
    }
    target *= &w.square();

    let mut series = Series::new(format!("triple average of {} at m = {m}", f.label), &["value"]);
    let mut sum = Real::zero();
    let mut count = 0i64;
    scan_sequence(seq, n_max, |n, mu, new, reset| {
        if reset {
            sum = Real::zero();
            count = 0;
        }
        for g in new {
            let row: Vec<V> = lambda_m.elements().iter().map(|h| f.eval(&model.compose_unchecked(g, h))).collect();
            sum += norm_sq_of_sum(&row);
        }
        count += new.len() as i64;
        series.push(n, mu.clone(), vec![&sum * w.square() / Real::int(count)]);
        Ok(())
    })?;
    let outcome = trend.evaluate(&series, 0, &target);
    Ok(TripleDoubleReport { series, target, outcome })
}

/// `∫_Λ∫_Λ f(h₁⁻¹h₂) ≤ μ(Λ) ∫_S f` for `f ≥ 0` and `S ⊇ Λ⁻¹Λ`.
pub fn folding_inequality(
    model: &GroupModel,
    f: &GroupFunction<Real>,
    set: &FiniteSubset,
    superset: Option<&FiniteSubset>,
) -> Result<InequalityReport> {
    let quotient = quotient_set(model, set);
    let s = superset.unwrap_or(&quotient);
    if !quotient.is_subset_of(s) {
        return Err(Error::input("S does not contain Λ⁻¹Λ"));
    }
    let mut on_s = Real::zero();
    for h in s.elements() {
        let v = f.eval(h);
        if v.is_negative() {
            return Err(Error::input(format!("{} is negative at {h}", f.label)));
        }
        on_s += v;
    }
    let w = model.weight();
    let mut lhs = Real::zero();
    for (d, mult) in set_difference_multiplicities(model, set) {
        lhs += f.eval(&d) * Real::int(mult);
    }
    let lhs = lhs * w.square();
    let rhs = set.measure() * w * on_s;
    InequalityReport { name: "folding inequality", lhs, rhs }.checked(|| describe_set(set))
}

/// `|(1/μ(Λ)²) ∫_Λ∫_Λ γ(h₁⁻¹h₂)| ≤ (1/μ(Λ)) ∫_{Λ⁻¹Λ} |γ|` on a given set.
pub fn gamma_quotient_bound_on(
    model: &GroupModel,
    set: &FiniteSubset,
    gamma: &dyn Fn(&GroupElement) -> Real,
) -> Result<InequalityReport> {
    let mults = set_difference_multiplicities(model, set);
    gamma_quotient_from(model, set.measure(), &mults, gamma).and_then(|r| r.checked(|| describe_set(set)))
}

fn gamma_quotient_from(
    model: &GroupModel,
    mu: &Real,
    mults: &BTreeMap<GroupElement, i64>,
    gamma: &dyn Fn(&GroupElement) -> Real,
) -> Result<InequalityReport> {
    if mu.is_zero() {
        return Err(Error::InvariantViolation("μ(Λ) = 0".into()));
    }
    let w = model.weight();
    let (mut double, mut single) = (Real::zero(), Real::zero());
    for (d, mult) in mults {
        let v = gamma(d);
        single += v.abs();
        double += v * Real::int(*mult);
    }
    let lhs = (double * w.square() / mu.square()).abs();
    let rhs = single * w / mu;
    Ok(InequalityReport { name: "quotient bound on γ", lhs, rhs })
}

/// The quotient bound at `Λ_m` of a sequence.
pub fn gamma_quotient_bound(
    gamma: &dyn Fn(&GroupElement) -> Real,
    seq: &FolnerSequence,
    m: usize,
) -> Result<InequalityReport> {
    let mults = difference_multiplicities(seq, m)?;
    gamma_quotient_from(&seq.model, &seq.measure(m)?, &mults, gamma)
        .and_then(|r| r.checked(|| format!("Λ_{m} of {}", seq.description)))
}

#[derive(Clone, Debug)]
pub struct VdcOptions {
    pub m_list: Vec<usize>,
    pub n_max: usize,
    /// Defaults to `10 b² / μ(Λ_{m_max})`.
    pub condition_trend: Option<Trend>,
    /// Defaults to `10 b / √μ(Λ_{n_max})`.
    pub conclusion_trend: Option<Trend>,
}

impl VdcOptions {
    pub fn new(n_max: usize) -> Self {
        VdcOptions { m_list: vec![1, 2, 4, 8, 16], n_max, condition_trend: None, conclusion_trend: None }
    }
}

#[derive(Clone, Debug)]
pub struct VdcVerdict {
    /// Indexed by `m`: `(1/μ(Λ_m)²) ∫∫_{Λ_m²} γ_{h₁⁻¹h₂}`.
    pub condition: Series,
    /// Columns `norm_sq` and `norm` of the Følner average.
    pub conclusion: Series,
    pub condition_outcome: TrendOutcome,
    pub conclusion_outcome: TrendOutcome,
    /// `(m, uniform_defect(n_max, m))`.
    pub uniformity: Vec<(usize, Real)>,
    pub gamma_source: String,
    pub metadata: Vec<(String, String)>,
    pub verdict: Verdict,
}

/// `‖avg_{Λ_n} f‖²` and `‖avg_{Λ_n} f‖` for `n = 1..=n_max`.
pub fn average_norm_series<V: HilbertVector>(
    f: &GroupFunction<V>,
    seq: &FolnerSequence,
    n_max: usize,
) -> Result<Series> {
    let mut series = Series::new(format!("norm of the average of {}", f.label), &["norm_sq", "norm"]);
    let mut tracker = SumTracker::new();
    let mut count = 0i64;
    scan_sequence(seq, n_max, |n, mu, new, reset| {
        if reset {
            tracker.clear();
            count = 0;
        }
        for g in new {
            tracker.push(f.checked_eval(g)?);
        }
        count += new.len() as i64;
        let norm_sq = tracker.norm_sq() / Real::int(count).square();
        let norm = norm_sq.sqrt();
        series.push(n, mu.clone(), vec![norm_sq, norm]);
        Ok(())
    })?;
    Ok(series)
}

/// The sequence form of the van der Corput lemma at finite scale.
pub fn vdc_verdict<V: HilbertVector>(
    f: &GroupFunction<V>,
    seq: &FolnerSequence,
    opts: &VdcOptions,
    source: GammaSource,
) -> Result<VdcVerdict> {
    let b = f.sup_bound.clone();
    let gamma_source = format!("{source:?}");
    let mut table = GammaTable::new(f, seq, source);
    let mut condition = Series::new(format!("vdc condition for {}", f.label), &["value"]);
    let mut uniformity = Vec::new();
    let w2 = seq.model.weight().square();
    for &m in &opts.m_list {
        let mu = seq.measure(m)?;
        let mut double = Real::zero();
        for (d, mult) in difference_multiplicities(seq, m)? {
            let g = table.get(&d)?;
            if !g.is_zero() {
                double += g * Real::int(mult);
            }
        }
        condition.push(m, mu.clone(), vec![double * &w2 / mu.square()]);
        uniformity.push((m, seq.uniform_defect(opts.n_max, m)?));
    }
    let conclusion = average_norm_series(f, seq, opts.n_max)?;

    let m_last = *opts.m_list.last().ok_or_else(|| Error::config("m_list is empty"))?;
    let cond_trend = match &opts.condition_trend {
        Some(t) => t.clone(),
        None => Trend::from_rate(b.square() / seq.measure(m_last)?),
    };
    let concl_trend = match &opts.conclusion_trend {
        Some(t) => t.clone(),
        None => Trend::from_rate(&b / seq.measure(opts.n_max)?.sqrt()),
    };
    let condition_outcome = cond_trend.to_zero(&condition, 0);
    let conclusion_outcome = concl_trend.to_zero(&conclusion, 1);
    let verdict = match (condition_outcome.passed, conclusion_outcome.passed) {
        (false, _) => Verdict::Inconclusive,
        (true, true) => Verdict::Pass,
        (true, false) => Verdict::Fail,
    };
    let metadata = vec![
        ("γ Borel measurability".to_string(), "not applicable (discrete)".to_string()),
        ("sequence".to_string(), seq.description.clone()),
        ("sup bound".to_string(), b.to_string()),
    ];
    Ok(VdcVerdict {
        condition,
        conclusion,
        condition_outcome,
        conclusion_outcome,
        uniformity,
        gamma_source,
        metadata,
        verdict,
    })
}
