//! Abelian group carriers, finite subsets with their invariant measure,
//! Følner sequences and homomorphism families.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::real::Real;

/// Integer coordinates of a group element. For cyclic groups the single
/// coordinate is a residue, for scaled lattices the point is `spacing * coords`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct GroupElement(pub SmallVec<[i64; 2]>);

impl GroupElement {
    pub fn new(coords: &[i64]) -> Self {
        GroupElement(SmallVec::from_slice(coords))
    }

    pub fn scalar(v: i64) -> Self {
        GroupElement::new(&[v])
    }

    pub fn zero(rank: usize) -> Self {
        GroupElement(SmallVec::from_elem(0, rank))
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Componentwise sum without reduction; only valid for lattices.
    pub fn plus(&self, other: &GroupElement) -> GroupElement {
        GroupElement(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn minus(&self, other: &GroupElement) -> GroupElement {
        GroupElement(self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn negated(&self) -> GroupElement {
        GroupElement(self.0.iter().map(|a| -a).collect())
    }

    /// Largest absolute coordinate.
    pub fn max_abs(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            return write!(f, "{}", self.0[0]);
        }
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroupKind {
    IntegerLattice {
        rank: usize,
    },
    Cyclic {
        modulus: i64,
    },
    /// `Z^rank` scaled by `spacing`, a stand-in for `R^rank` with Riemann-sum
    /// measure `spacing^rank` per point.
    ScaledLattice {
        rank: usize,
        spacing: Real,
    },
}

/// Admissible elements for sequences that live in a subsemigroup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsemigroup {
    Whole,
    NonnegativeCone,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupModel {
    pub kind: GroupKind,
    pub subsemigroup: Subsemigroup,
    weight: Real,
}

impl GroupModel {
    pub fn integers() -> Self {
        GroupModel::lattice(1).expect("rank 1 is valid")
    }

    pub fn lattice(rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::structural("lattice rank must be at least 1"));
        }
        Ok(GroupModel {
            kind: GroupKind::IntegerLattice { rank },
            subsemigroup: Subsemigroup::Whole,
            weight: Real::one(),
        })
    }

    pub fn cyclic(modulus: i64) -> Result<Self> {
        if modulus < 2 {
            return Err(Error::structural(format!("cyclic modulus {modulus} < 2")));
        }
        Ok(GroupModel { kind: GroupKind::Cyclic { modulus }, subsemigroup: Subsemigroup::Whole, weight: Real::one() })
    }

    pub fn scaled(rank: usize, spacing: Real) -> Result<Self> {
        if rank == 0 {
            return Err(Error::structural("lattice rank must be at least 1"));
        }
        if spacing.signum() <= 0 {
            return Err(Error::structural(format!("lattice spacing {spacing} must be positive")));
        }
        let weight = spacing.pow(rank as u32);
        Ok(GroupModel { kind: GroupKind::ScaledLattice { rank, spacing }, subsemigroup: Subsemigroup::Whole, weight })
    }

    pub fn with_subsemigroup(mut self, s: Subsemigroup) -> Self {
        self.subsemigroup = s;
        self
    }

    pub fn rank(&self) -> usize {
        match &self.kind {
            GroupKind::IntegerLattice { rank } | GroupKind::ScaledLattice { rank, .. } => *rank,
            GroupKind::Cyclic { .. } => 1,
        }
    }

    /// Measure of a single point.
    pub fn weight(&self) -> &Real {
        &self.weight
    }

    pub fn is_lattice(&self) -> bool {
        !matches!(self.kind, GroupKind::Cyclic { .. })
    }

    pub fn modulus(&self) -> Option<i64> {
        match self.kind {
            GroupKind::Cyclic { modulus } => Some(modulus),
            _ => None,
        }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::zero(self.rank())
    }

    /// Builds an element, reducing residues for cyclic groups.
    pub fn element(&self, coords: &[i64]) -> Result<GroupElement> {
        if coords.len() != self.rank() {
            return Err(Error::structural(format!(
                "element has {} coordinates, group rank is {}",
                coords.len(),
                self.rank()
            )));
        }
        Ok(self.reduce(GroupElement::new(coords)))
    }

    fn reduce(&self, mut g: GroupElement) -> GroupElement {
        if let Some(m) = self.modulus() {
            for c in g.0.iter_mut() {
                *c = c.rem_euclid(m);
            }
        }
        g
    }

    pub fn check(&self, g: &GroupElement) -> Result<()> {
        if g.rank() != self.rank() {
            return Err(Error::structural(format!("element {g} has rank {}, group rank is {}", g.rank(), self.rank())));
        }
        if let Some(m) = self.modulus() {
            if g.0.iter().any(|&c| c < 0 || c >= m) {
                return Err(Error::structural(format!("{g} is not a residue mod {m}")));
            }
        }
        Ok(())
    }

    pub fn compose(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        Ok(self.compose_unchecked(g, h))
    }

    pub fn compose_unchecked(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        self.reduce(g.plus(h))
    }

    pub fn inverse(&self, g: &GroupElement) -> GroupElement {
        self.reduce(g.negated())
    }

    /// `h1^{-1} h2`.
    pub fn quotient(&self, h1: &GroupElement, h2: &GroupElement) -> GroupElement {
        self.reduce(h2.minus(h1))
    }

    pub fn in_subsemigroup(&self, g: &GroupElement) -> bool {
        match self.subsemigroup {
            Subsemigroup::Whole => true,
            Subsemigroup::NonnegativeCone => g.0.iter().all(|&c| c >= 0),
        }
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            GroupKind::IntegerLattice { rank: 1 } => "Z".into(),
            GroupKind::IntegerLattice { rank } => format!("Z^{rank}"),
            GroupKind::Cyclic { modulus } => format!("Z/{modulus}"),
            GroupKind::ScaledLattice { rank, spacing } => format!("({spacing})Z^{rank}"),
        }
    }
}

/// A finite set of group elements, sorted lexicographically and deduplicated.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteSubset {
    elements: Vec<GroupElement>,
    measure: Real,
}

impl FiniteSubset {
    pub fn new(model: &GroupModel, elements: impl IntoIterator<Item = GroupElement>) -> Result<Self> {
        let mut elements: Vec<GroupElement> = elements.into_iter().collect();
        for g in elements.iter_mut() {
            if g.rank() != model.rank() {
                return Err(Error::structural(format!("element {g} does not match {}", model.describe())));
            }
            *g = model.reduce(g.clone());
        }
        elements.sort_unstable();
        elements.dedup();
        Ok(FiniteSubset::from_sorted(model, elements))
    }

    /// Caller guarantees `elements` is sorted, deduplicated and reduced.
    pub(crate) fn from_sorted(model: &GroupModel, elements: Vec<GroupElement>) -> Self {
        let measure = Real::int(elements.len() as i64) * model.weight();
        FiniteSubset { elements, measure }
    }

    pub fn interval(model: &GroupModel, lo: i64, hi: i64) -> Result<Self> {
        FiniteSubset::new(model, (lo..=hi).map(GroupElement::scalar))
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn measure(&self) -> &Real {
        &self.measure
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.elements.binary_search(g).is_ok()
    }

    /// `Λg`.
    pub fn translate(&self, model: &GroupModel, g: &GroupElement) -> FiniteSubset {
        let mut shifted: Vec<GroupElement> = self.elements.iter().map(|x| model.compose_unchecked(x, g)).collect();
        if !model.is_lattice() {
            shifted.sort_unstable();
        }
        FiniteSubset::from_sorted(model, shifted)
    }

    pub fn is_subset_of(&self, other: &FiniteSubset) -> bool {
        self.elements.iter().all(|g| other.contains(g))
    }
}

fn sorted_intersection_count(a: &[GroupElement], b: &[GroupElement]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Elements of `a` missing from `b`, both sorted.
pub(crate) fn sorted_difference(a: &[GroupElement], b: &[GroupElement]) -> Vec<GroupElement> {
    let mut out = Vec::new();
    let mut j = 0;
    for x in a {
        while j < b.len() && b[j] < *x {
            j += 1;
        }
        if j >= b.len() || b[j] != *x {
            out.push(x.clone());
        }
    }
    out
}

/// `μ(Λ Δ Λg)` by set arithmetic.
pub fn symmetric_difference_measure(model: &GroupModel, set: &FiniteSubset, g: &GroupElement) -> Result<Real> {
    model.check(g)?;
    let shifted = set.translate(model, g);
    let common = sorted_intersection_count(set.elements(), shifted.elements());
    let count = 2 * (set.len() - common);
    Ok(Real::int(count as i64) * model.weight())
}

/// `Λ^{-1}Λ = {h1^{-1} h2 : h1, h2 ∈ Λ}`.
pub fn quotient_set(model: &GroupModel, set: &FiniteSubset) -> FiniteSubset {
    if set.is_empty() {
        return FiniteSubset::from_sorted(model, Vec::new());
    }
    if let Some(m) = model.modulus() {
        let mut hit = vec![false; m as usize];
        for a in set.elements() {
            for b in set.elements() {
                hit[(b.0[0] - a.0[0]).rem_euclid(m) as usize] = true;
            }
        }
        let elements = (0..m).filter(|&r| hit[r as usize]).map(GroupElement::scalar).collect();
        return FiniteSubset::from_sorted(model, elements);
    }
    dense_lattice_quotient(model, set).unwrap_or_else(|| quotient_set_pairwise(model, set))
}

/// Reference implementation through an ordered set of all pairwise quotients.
pub fn quotient_set_pairwise(model: &GroupModel, set: &FiniteSubset) -> FiniteSubset {
    let mut out = BTreeSet::new();
    for a in set.elements() {
        for b in set.elements() {
            out.insert(model.quotient(a, b));
        }
    }
    FiniteSubset::from_sorted(model, out.into_iter().collect())
}

const DENSE_QUOTIENT_LIMIT: i128 = 1 << 27;

/// Marks differences in a bitmap over the bounding box of `Λ - Λ`. Every
/// element gets a linear index in that box so a difference is a single
/// subtraction of indices.
fn dense_lattice_quotient(model: &GroupModel, set: &FiniteSubset) -> Option<FiniteSubset> {
    let rank = model.rank();
    let mut lo = vec![i64::MAX; rank];
    let mut hi = vec![i64::MIN; rank];
    for g in set.elements() {
        for d in 0..rank {
            lo[d] = lo[d].min(g.0[d]);
            hi[d] = hi[d].max(g.0[d]);
        }
    }
    let extents: Vec<i128> = (0..rank).map(|d| 2 * (hi[d] as i128 - lo[d] as i128) + 1).collect();
    let volume: i128 = extents.iter().product();
    if volume > DENSE_QUOTIENT_LIMIT {
        return None;
    }
    let mut strides = vec![1i64; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * extents[d + 1] as i64;
    }
    let offset: i64 = (0..rank).map(|d| (hi[d] - lo[d]) * strides[d]).sum();
    let linear: Vec<i64> =
        set.elements().iter().map(|g| (0..rank).map(|d| (g.0[d] - lo[d]) * strides[d]).sum()).collect();
    let mut hit = vec![false; volume as usize];
    for &a in &linear {
        let base = offset - a;
        for &b in &linear {
            hit[(base + b) as usize] = true;
        }
    }
    let mut elements = Vec::new();
    for (idx, _) in hit.iter().enumerate().filter(|(_, &h)| h) {
        let mut rest = idx as i64;
        let mut coords: SmallVec<[i64; 2]> = SmallVec::with_capacity(rank);
        for d in 0..rank {
            let c = rest / strides[d];
            rest %= strides[d];
            coords.push(c - (hi[d] - lo[d]));
        }
        elements.push(GroupElement(coords));
    }
    Some(FiniteSubset::from_sorted(model, elements))
}

/// `scale * n + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Affine {
    pub scale: i64,
    pub offset: i64,
}

impl Affine {
    pub const fn new(scale: i64, offset: i64) -> Self {
        Affine { scale, offset }
    }

    pub fn at(&self, n: usize) -> i64 {
        self.scale * n as i64 + self.offset
    }

    fn minus(&self, other: &Affine) -> Affine {
        Affine::new(self.scale - other.scale, self.offset - other.offset)
    }
}

pub type SetGenerator = Arc<dyn Fn(usize) -> Vec<GroupElement> + Send + Sync>;

#[derive(Clone)]
pub enum Shape {
    /// The cube `[lo(n), hi(n)]^rank` in lattice coordinates.
    Box {
        lo: Affine,
        hi: Affine,
    },
    /// Lattice points `x` with `|spacing * x| < n` (Euclidean, open).
    Ball,
    /// `Λ_n^{-1} Λ_n` of another sequence.
    Quotient(Arc<FolnerSequence>),
    Custom {
        generator: SetGenerator,
        nested: bool,
    },
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Box { lo, hi } => write!(f, "Box({lo:?}, {hi:?})"),
            Shape::Ball => write!(f, "Ball"),
            Shape::Quotient(inner) => write!(f, "Quotient({})", inner.description),
            Shape::Custom { nested, .. } => write!(f, "Custom(nested = {nested})"),
        }
    }
}

/// An indexed family `n ↦ Λ_n` of finite subsets, `n ≥ 1`.
#[derive(Clone, Debug)]
pub struct FolnerSequence {
    pub model: GroupModel,
    pub shape: Shape,
    pub description: String,
}

impl FolnerSequence {
    /// `Λ_n = [-n, n]^rank`.
    pub fn symmetric(model: GroupModel) -> Self {
        let description = format!("[-n,n]^{} in {}", model.rank(), model.describe());
        FolnerSequence { model, shape: Shape::Box { lo: Affine::new(-1, 0), hi: Affine::new(1, 0) }, description }
    }

    /// `Λ_n = [1, n]^rank`.
    pub fn initial(model: GroupModel) -> Self {
        let description = format!("[1,n]^{} in {}", model.rank(), model.describe());
        FolnerSequence {
            model: model.with_subsemigroup(Subsemigroup::NonnegativeCone),
            shape: Shape::Box { lo: Affine::new(0, 1), hi: Affine::new(1, 0) },
            description,
        }
    }

    pub fn ball(model: GroupModel) -> Self {
        let description = format!("open balls of radius n in {}", model.describe());
        FolnerSequence { model, shape: Shape::Ball, description }
    }

    pub fn boxes(model: GroupModel, lo: Affine, hi: Affine, description: impl Into<String>) -> Self {
        FolnerSequence { model, shape: Shape::Box { lo, hi }, description: description.into() }
    }

    pub fn custom(model: GroupModel, generator: SetGenerator, nested: bool, description: impl Into<String>) -> Self {
        FolnerSequence { model, shape: Shape::Custom { generator, nested }, description: description.into() }
    }

    fn box_range(&self, n: usize) -> Option<(i64, i64)> {
        match &self.shape {
            Shape::Box { lo, hi } => Some((lo.at(n), hi.at(n))),
            _ => None,
        }
    }

    /// Box bounds when the set is a genuine (non-wrapping) lattice box.
    pub fn lattice_box(&self, n: usize) -> Option<(i64, i64)> {
        if self.model.is_lattice() {
            self.box_range(n)
        } else {
            None
        }
    }

    pub fn set(&self, n: usize) -> Result<FiniteSubset> {
        let set = self.raw_set(n)?;
        if set.is_empty() {
            return Err(Error::InvariantViolation(format!("Λ_{n} of `{}` is empty", self.description)));
        }
        Ok(set)
    }

    fn raw_set(&self, n: usize) -> Result<FiniteSubset> {
        let model = &self.model;
        match &self.shape {
            Shape::Box { lo, hi } => {
                let (a, b) = (lo.at(n), hi.at(n));
                if a > b {
                    return Ok(FiniteSubset::from_sorted(model, Vec::new()));
                }
                let elements = box_points(model.rank(), a, b);
                if model.is_lattice() {
                    Ok(FiniteSubset::from_sorted(model, elements))
                } else {
                    FiniteSubset::new(model, elements)
                }
            }
            Shape::Ball => Ok(FiniteSubset::from_sorted(model, ball_points(model, n))),
            Shape::Quotient(inner) => Ok(quotient_set(model, &inner.set(n)?)),
            Shape::Custom { generator, .. } => FiniteSubset::new(model, generator(n)),
        }
    }

    pub fn size(&self, n: usize) -> Result<usize> {
        if let Some((a, b)) = self.lattice_box(n) {
            let side = (b - a + 1).max(0) as usize;
            return Ok(side.pow(self.model.rank() as u32));
        }
        Ok(self.raw_set(n)?.len())
    }

    pub fn measure(&self, n: usize) -> Result<Real> {
        Ok(Real::int(self.size(n)? as i64) * self.model.weight())
    }

    pub fn is_nested(&self) -> bool {
        match &self.shape {
            Shape::Box { lo, hi } => lo.scale <= 0 && hi.scale >= 0,
            Shape::Ball => true,
            Shape::Quotient(inner) => inner.is_nested(),
            Shape::Custom { nested, .. } => *nested,
        }
    }

    /// `Λ_n \ Λ_{n-1}` (all of `Λ_1` for `n = 1`). Only meaningful for
    /// nested sequences.
    pub fn increment(&self, n: usize) -> Result<Vec<GroupElement>> {
        if n <= 1 {
            return Ok(self.raw_set(1)?.elements().to_vec());
        }
        if let (Some((a0, b0)), Some((a1, b1)), 1) = (self.lattice_box(n - 1), self.lattice_box(n), self.model.rank()) {
            if a0 > b0 {
                return Ok((a1..=b1).map(GroupElement::scalar).collect());
            }
            return Ok((a1..a0.min(b1 + 1)).chain((b0 + 1).max(a1)..=b1).map(GroupElement::scalar).collect());
        }
        let prev = self.raw_set(n - 1)?;
        let cur = self.raw_set(n)?;
        Ok(sorted_difference(cur.elements(), prev.elements()))
    }

    /// The sequence `n ↦ Λ_n^{-1} Λ_n`, analytic for lattice boxes.
    pub fn quotient_sequence(&self) -> FolnerSequence {
        match (&self.shape, self.model.is_lattice()) {
            (Shape::Box { lo, hi }, true) => FolnerSequence {
                model: self.model.clone().with_subsemigroup(Subsemigroup::Whole),
                shape: Shape::Box { lo: lo.minus(hi), hi: hi.minus(lo) },
                description: format!("quotients of {}", self.description),
            },
            _ => FolnerSequence {
                model: self.model.clone().with_subsemigroup(Subsemigroup::Whole),
                shape: Shape::Quotient(Arc::new(self.clone())),
                description: format!("quotients of {}", self.description),
            },
        }
    }

    /// `μ(Λ_n Δ Λ_n g)`, closed form for lattice boxes.
    pub fn symmetric_difference(&self, n: usize, g: &GroupElement) -> Result<Real> {
        self.model.check(g)?;
        if let Some((a, b)) = self.lattice_box(n) {
            let side = (b - a + 1).max(0);
            let full = side.pow(self.model.rank() as u32);
            let overlap: i64 = g.coords().iter().map(|c| (side - c.abs()).max(0)).product();
            return Ok(Real::int(2 * (full - overlap)) * self.model.weight());
        }
        symmetric_difference_measure(&self.model, &self.set(n)?, g)
    }

    /// `μ(Λ_n Δ Λ_n g) / μ(Λ_n)`.
    pub fn folner_defect(&self, n: usize, g: &GroupElement) -> Result<Real> {
        let mu = self.measure(n)?;
        if mu.is_zero() {
            return Err(Error::InvariantViolation(format!("μ(Λ_{n}) = 0 for `{}`", self.description)));
        }
        Ok(self.symmetric_difference(n, g)? / mu)
    }

    /// `max_{g ∈ Λ_m} folner_defect(n, g)`.
    pub fn uniform_defect(&self, n: usize, m: usize) -> Result<Real> {
        let lambda_m = self.raw_set(m)?;
        if lambda_m.is_empty() {
            return Err(Error::structural(format!("Λ_{m} is empty")));
        }
        if self.lattice_box(n).is_some() {
            let mut best = Real::zero();
            for g in lambda_m.elements() {
                best = best.max(self.folner_defect(n, g)?);
            }
            return Ok(best);
        }
        let lambda_n = self.set(n)?;
        let mut best = Real::zero();
        for g in lambda_m.elements() {
            let d = symmetric_difference_measure(&self.model, &lambda_n, g)? / lambda_n.measure();
            best = best.max(d);
        }
        Ok(best)
    }
}

pub(crate) fn box_points(rank: usize, a: i64, b: i64) -> Vec<GroupElement> {
    let side = (b - a + 1) as usize;
    let total = side.pow(rank as u32);
    let mut out = Vec::with_capacity(total);
    let mut cur: SmallVec<[i64; 2]> = SmallVec::from_elem(a, rank);
    for _ in 0..total {
        out.push(GroupElement(cur.clone()));
        for d in (0..rank).rev() {
            if cur[d] < b {
                cur[d] += 1;
                break;
            }
            cur[d] = a;
        }
    }
    out
}

/// Lattice points with `|spacing * x|^2 < n^2`, in lexicographic order.
fn ball_points(model: &GroupModel, n: usize) -> Vec<GroupElement> {
    let rank = model.rank();
    let spacing = match &model.kind {
        GroupKind::ScaledLattice { spacing, .. } => spacing.clone(),
        _ => Real::one(),
    };
    // |x|^2 < (n / spacing)^2, compared exactly.
    let bound_sq = (Real::int(n as i64) / &spacing).square();
    let reach = (Real::int(n as i64) / &spacing).floor().to_f64() as i64 + 1;
    let mut out = Vec::new();
    for p in box_points(rank, -reach, reach) {
        let norm: i64 = p.coords().iter().map(|c| c * c).sum();
        if Real::int(norm) < bound_sq {
            out.push(p);
        }
    }
    out
}

/// An integer matrix acting linearly on lattice coordinates, or a residue
/// multiplier on a cyclic group.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Homomorphism {
    matrix: Vec<Vec<i64>>,
}

impl Homomorphism {
    pub fn scalar(k: i64) -> Self {
        Homomorphism { matrix: vec![vec![k]] }
    }

    pub fn diagonal(entries: &[i64]) -> Self {
        let q = entries.len();
        let matrix = (0..q).map(|i| (0..q).map(|j| if i == j { entries[i] } else { 0 }).collect()).collect();
        Homomorphism { matrix }
    }

    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self> {
        let q = rows.len();
        if q == 0 || rows.iter().any(|r| r.len() != q) {
            return Err(Error::structural("homomorphism matrix must be square and nonempty"));
        }
        Ok(Homomorphism { matrix: rows })
    }

    pub fn identity(rank: usize) -> Self {
        Homomorphism::diagonal(&vec![1; rank])
    }

    pub fn zero(rank: usize) -> Self {
        Homomorphism::diagonal(&vec![0; rank])
    }

    pub fn rank(&self) -> usize {
        self.matrix.len()
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.matrix
    }

    /// Canonical form within `model` (residues for cyclic groups).
    pub fn reduced(&self, model: &GroupModel) -> Homomorphism {
        match model.modulus() {
            Some(m) => Homomorphism {
                matrix: self.matrix.iter().map(|r| r.iter().map(|v| v.rem_euclid(m)).collect()).collect(),
            },
            None => self.clone(),
        }
    }

    pub fn check(&self, model: &GroupModel) -> Result<()> {
        if self.rank() != model.rank() {
            return Err(Error::structural(format!("homomorphism of rank {} on {}", self.rank(), model.describe())));
        }
        Ok(())
    }

    pub fn apply(&self, model: &GroupModel, g: &GroupElement) -> GroupElement {
        let coords: SmallVec<[i64; 2]> =
            self.matrix.iter().map(|row| row.iter().zip(g.coords()).map(|(a, b)| a * b).sum()).collect();
        model.reduce(GroupElement(coords))
    }

    /// `g ↦ φ2(g) φ1(g)^{-1}` where `self = φ2`.
    pub fn difference(&self, phi1: &Homomorphism) -> Homomorphism {
        let matrix =
            self.matrix.iter().zip(&phi1.matrix).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
        Homomorphism { matrix }
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().flatten().all(|&v| v == 0)
    }

    pub fn is_zero_in(&self, model: &GroupModel) -> bool {
        self.reduced(model).is_zero()
    }

    pub fn is_diagonal(&self) -> bool {
        self.matrix.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, &v)| i == j || v == 0))
    }

    /// Sampled check that `φ(g + h) = φ(g) + φ(h)`.
    pub fn check_linearity(&self, model: &GroupModel, samples: &[(GroupElement, GroupElement)]) -> bool {
        samples.iter().all(|(g, h)| {
            let lhs = self.apply(model, &model.compose_unchecked(g, h));
            let rhs = model.compose_unchecked(&self.apply(model, g), &self.apply(model, h));
            lhs == rhs
        })
    }
}

impl fmt::Display for Homomorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rank() == 1 {
            return write!(f, "{}", self.matrix[0][0]);
        }
        if self.is_diagonal() {
            let d: Vec<String> = (0..self.rank()).map(|i| self.matrix[i][i].to_string()).collect();
            return write!(f, "diag({})", d.join(","));
        }
        let rows: Vec<String> = self
            .matrix
            .iter()
            .map(|r| format!("[{}]", r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        write!(f, "[{}]", rows.join(","))
    }
}

/// The infinite family a finite member list is declared to be a truncation of.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosureRule {
    /// All nonzero integer matrices.
    NonzeroMatrices,
    /// All nonzero diagonal integer matrices (nonzero scalars in rank 1).
    NonzeroDiagonal,
}

impl ClosureRule {
    pub fn admits(&self, model: &GroupModel, phi: &Homomorphism) -> bool {
        if phi.check(model).is_err() || phi.is_zero_in(model) {
            return false;
        }
        match self {
            ClosureRule::NonzeroMatrices => true,
            ClosureRule::NonzeroDiagonal => phi.reduced(model).is_diagonal(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TranslationalVerdict {
    Pass,
    Fail { phi1: Homomorphism, phi2: Homomorphism, difference: Homomorphism },
}

impl TranslationalVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, TranslationalVerdict::Pass)
    }
}

#[derive(Clone, Debug)]
pub struct TranslationalFamily {
    members: Vec<Homomorphism>,
    pub closure: Option<ClosureRule>,
}

impl TranslationalFamily {
    pub fn new(model: &GroupModel, members: Vec<Homomorphism>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(members.len());
        for phi in members {
            phi.check(model)?;
            let r = phi.reduced(model);
            if !seen.insert(r.clone()) {
                return Err(Error::structural(format!("duplicate member {r}")));
            }
            out.push(r);
        }
        Ok(TranslationalFamily { members: out, closure: None })
    }

    pub fn with_closure(mut self, rule: ClosureRule) -> Self {
        self.closure = Some(rule);
        self
    }

    /// Nonzero multipliers `{±1, ..., ±k}` on a rank-1 group.
    pub fn multipliers(model: &GroupModel, k: i64) -> Result<Self> {
        let members = (1..=k).flat_map(|v| [Homomorphism::scalar(-v), Homomorphism::scalar(v)]).collect();
        TranslationalFamily::new(model, members)
    }

    pub fn members(&self) -> &[Homomorphism] {
        &self.members
    }

    pub fn contains(&self, model: &GroupModel, phi: &Homomorphism) -> bool {
        let r = phi.reduced(model);
        self.members.contains(&r) || self.closure.map(|c| c.admits(model, &r)).unwrap_or(false)
    }

    /// Checks closure of the member list under `φ2 φ1^{-1}` by enumeration.
    pub fn verify_translational(&self, model: &GroupModel) -> TranslationalVerdict {
        let listed: BTreeSet<&Homomorphism> = self.members.iter().collect();
        for phi1 in &self.members {
            for phi2 in &self.members {
                if phi1 == phi2 {
                    continue;
                }
                let d = phi2.difference(phi1).reduced(model);
                if !listed.contains(&d) {
                    return TranslationalVerdict::Fail { phi1: phi1.clone(), phi2: phi2.clone(), difference: d };
                }
            }
        }
        TranslationalVerdict::Pass
    }

    /// Checks that the members and every difference of distinct `used`
    /// homomorphisms belong to the family, either listed or admitted by the
    /// declared closure rule. The rules are themselves closed under
    /// differences of distinct members.
    pub fn verify_closure_for(&self, model: &GroupModel, used: &[Homomorphism]) -> TranslationalVerdict {
        let Some(rule) = self.closure else {
            return self.verify_translational(model);
        };
        for phi in self.members.iter().chain(used) {
            if !rule.admits(model, phi) {
                return TranslationalVerdict::Fail {
                    phi1: phi.clone(),
                    phi2: phi.clone(),
                    difference: phi.reduced(model),
                };
            }
        }
        for phi1 in used {
            for phi2 in used {
                let (r1, r2) = (phi1.reduced(model), phi2.reduced(model));
                if r1 == r2 {
                    continue;
                }
                let d = r2.difference(&r1).reduced(model);
                if !rule.admits(model, &d) {
                    return TranslationalVerdict::Fail { phi1: r1, phi2: r2, difference: d };
                }
            }
        }
        TranslationalVerdict::Pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z() -> GroupModel {
        GroupModel::integers()
    }

    fn z2() -> GroupModel {
        GroupModel::lattice(2).unwrap()
    }

    fn enumerate_symdiff(set: &[Vec<i64>], g: &[i64]) -> usize {
        let a: BTreeSet<Vec<i64>> = set.iter().cloned().collect();
        let b: BTreeSet<Vec<i64>> = set.iter().map(|x| x.iter().zip(g).map(|(p, q)| p + q).collect()).collect();
        a.symmetric_difference(&b).count()
    }

    #[test]
    fn compose_examples() {
        assert_eq!(z().compose(&GroupElement::scalar(3), &GroupElement::scalar(4)).unwrap(), GroupElement::scalar(7));
        assert_eq!(
            z2().compose(&GroupElement::new(&[1, -2]), &GroupElement::new(&[0, 5])).unwrap(),
            GroupElement::new(&[1, 3])
        );
        let z7 = GroupModel::cyclic(7).unwrap();
        assert_eq!(z7.compose(&GroupElement::scalar(5), &GroupElement::scalar(4)).unwrap(), GroupElement::scalar(2));
        assert!(z().compose(&GroupElement::scalar(1), &GroupElement::new(&[1, 1])).is_err());
    }

    #[test]
    fn symmetric_difference_examples() {
        let set = FiniteSubset::interval(&z(), -3, 3).unwrap();
        assert_eq!(symmetric_difference_measure(&z(), &set, &GroupElement::scalar(1)).unwrap(), Real::int(2));
        assert_eq!(symmetric_difference_measure(&z(), &set, &GroupElement::scalar(0)).unwrap(), Real::zero());
        let pts: Vec<Vec<i64>> = (-2..=2).flat_map(|x| (-2..=2).map(move |y| vec![x, y])).collect();
        assert_eq!(enumerate_symdiff(&pts, &[1, 0]), 10);
        let sq = FiniteSubset::new(&z2(), pts.iter().map(|p| GroupElement::new(p))).unwrap();
        assert_eq!(symmetric_difference_measure(&z2(), &sq, &GroupElement::new(&[1, 0])).unwrap(), Real::int(10));
    }

    #[test]
    fn defect_examples() {
        let sym = FolnerSequence::symmetric(z());
        assert_eq!(sym.folner_defect(10, &GroupElement::scalar(1)).unwrap(), Real::ratio(2, 21));
        assert_eq!(sym.folner_defect(10, &GroupElement::scalar(0)).unwrap(), Real::zero());
        let init = FolnerSequence::initial(z());
        assert_eq!(init.folner_defect(100, &GroupElement::scalar(5)).unwrap(), Real::ratio(10, 100));
        assert_eq!(sym.uniform_defect(100, 2).unwrap(), Real::ratio(4, 201));
    }

    #[test]
    fn closed_form_defect_matches_enumeration() {
        let seq = FolnerSequence::symmetric(z2());
        for n in [1usize, 3, 7] {
            let set = seq.set(n).unwrap();
            for g in [[1, 0], [2, -1], [0, 0], [9, 3], [-3, 20]] {
                let g = GroupElement::new(&g);
                assert_eq!(
                    seq.symmetric_difference(n, &g).unwrap(),
                    symmetric_difference_measure(&z2(), &set, &g).unwrap()
                );
            }
        }
        // [-50,50]^2 against g = (1,1): 2 * (101^2 - 100^2).
        assert_eq!(seq.uniform_defect(50, 1).unwrap(), Real::ratio(402, 10201));
    }

    #[test]
    fn cyclic_boxes_wrap() {
        let z5 = GroupModel::cyclic(5).unwrap();
        let seq = FolnerSequence::symmetric(z5.clone());
        assert_eq!(seq.set(1).unwrap().len(), 3);
        assert_eq!(seq.set(4).unwrap().len(), 5);
        assert_eq!(seq.folner_defect(4, &GroupElement::scalar(2)).unwrap(), Real::zero());
    }

    #[test]
    fn quotient_examples() {
        for n in 1..=12 {
            let set = FiniteSubset::interval(&z(), -n, n).unwrap();
            let q = quotient_set(&z(), &set);
            assert_eq!(q, FiniteSubset::interval(&z(), -2 * n, 2 * n).unwrap());
            assert_eq!(q, quotient_set_pairwise(&z(), &set));
        }
        let single = FiniteSubset::new(&z2(), [GroupElement::new(&[4, -1])]).unwrap();
        assert_eq!(quotient_set(&z2(), &single).elements(), &[GroupElement::new(&[0, 0])]);
        let seq = FolnerSequence::symmetric(z2());
        for n in 1..=5usize {
            let q = quotient_set(&z2(), &seq.set(n).unwrap());
            assert_eq!(*q.measure(), Real::int(((4 * n + 1) * (4 * n + 1)) as i64));
            assert_eq!(q, seq.quotient_sequence().set(n).unwrap());
        }
    }

    #[test]
    fn quotient_sequence_of_initial_segments() {
        let q = FolnerSequence::initial(z()).quotient_sequence();
        assert_eq!(q.set(5).unwrap(), FiniteSubset::interval(&z(), -4, 4).unwrap());
        let generic = quotient_set(&z(), &FolnerSequence::initial(z()).set(5).unwrap());
        assert_eq!(generic, q.set(5).unwrap());
    }

    #[test]
    fn increments_reassemble_sets() {
        for seq in [
            FolnerSequence::symmetric(z()),
            FolnerSequence::initial(z()),
            FolnerSequence::symmetric(z2()),
            FolnerSequence::ball(GroupModel::scaled(2, Real::ratio(1, 2)).unwrap()),
        ] {
            let mut acc = Vec::new();
            for n in 1..=6 {
                acc.extend(seq.increment(n).unwrap());
                let set = FiniteSubset::new(&seq.model, acc.clone()).unwrap();
                assert_eq!(set.len(), acc.len(), "{}", seq.description);
                assert_eq!(set, seq.set(n).unwrap(), "{} n={n}", seq.description);
            }
        }
    }

    #[test]
    fn ball_counts() {
        let ball = FolnerSequence::ball(z2());
        // x^2 + y^2 < 4 leaves exactly the 3x3 square.
        assert_eq!(ball.set(2).unwrap().len(), 9);
        assert_eq!(ball.set(1).unwrap().len(), 1);
        let scaled = FolnerSequence::ball(GroupModel::scaled(1, Real::ratio(1, 4)).unwrap());
        assert_eq!(scaled.set(1).unwrap().len(), 7);
        assert_eq!(*scaled.set(1).unwrap().measure(), Real::ratio(7, 4));
    }

    #[test]
    fn translational_examples() {
        let m = TranslationalFamily::multipliers(&z(), 5).unwrap();
        match m.verify_translational(&z()) {
            TranslationalVerdict::Fail { difference, .. } => assert!(difference.rows()[0][0].abs() > 5),
            TranslationalVerdict::Pass => panic!("finite multiplier range cannot be closed"),
        }
        let ruled = m.clone().with_closure(ClosureRule::NonzeroDiagonal);
        let used = [Homomorphism::scalar(1), Homomorphism::scalar(2), Homomorphism::scalar(3)];
        assert!(ruled.verify_closure_for(&z(), &used).is_pass());
        let id = TranslationalFamily::new(&z(), vec![Homomorphism::scalar(1)]).unwrap();
        assert!(id.verify_translational(&z()).is_pass());
        let zero_closed =
            TranslationalFamily::new(&GroupModel::cyclic(2).unwrap(), vec![Homomorphism::scalar(1)]).unwrap();
        assert!(zero_closed.verify_translational(&GroupModel::cyclic(2).unwrap()).is_pass());
        assert!(TranslationalFamily::new(&z(), vec![Homomorphism::scalar(1), Homomorphism::scalar(1)]).is_err());
    }

    #[test]
    fn diagonal_family_on_z2() {
        let mut members = Vec::new();
        for a in -2..=2 {
            for b in -2..=2 {
                if (a, b) != (0, 0) {
                    members.push(Homomorphism::diagonal(&[a, b]));
                }
            }
        }
        let fam = TranslationalFamily::new(&z2(), members).unwrap();
        // diag(2,2) - diag(-2,-2) = diag(4,4) is outside the truncation.
        assert!(!fam.verify_translational(&z2()).is_pass());
        let fam = fam.with_closure(ClosureRule::NonzeroDiagonal);
        let used = [Homomorphism::diagonal(&[1, 1]), Homomorphism::diagonal(&[2, 1])];
        assert!(fam.verify_closure_for(&z2(), &used).is_pass());
        let bad = [Homomorphism::from_rows(vec![vec![1, 1], vec![0, 1]]).unwrap()];
        assert!(!fam.verify_closure_for(&z2(), &bad).is_pass());
    }

    fn arb_set() -> impl Strategy<Value = Vec<(i64, i64)>> {
        prop::collection::vec((-20i64..20, -20i64..20), 1..30)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn measure_is_translation_invariant(pts in arb_set(), gx in -50i64..50, gy in -50i64..50) {
            let set = FiniteSubset::new(&z2(), pts.iter().map(|&(x, y)| GroupElement::new(&[x, y]))).unwrap();
            let g = GroupElement::new(&[gx, gy]);
            let moved = set.translate(&z2(), &g);
            prop_assert_eq!(moved.measure(), set.measure());
            let z9 = GroupModel::cyclic(9).unwrap();
            let cset = FiniteSubset::new(&z9, pts.iter().map(|&(x, _)| GroupElement::scalar(x))).unwrap();
            let cg = z9.element(&[gx]).unwrap();
            let cmoved = cset.translate(&z9, &cg);
            prop_assert_eq!(cmoved.measure(), cset.measure());
        }

        #[test]
        fn dense_quotient_matches_pairwise(pts in arb_set()) {
            let set = FiniteSubset::new(&z2(), pts.iter().map(|&(x, y)| GroupElement::new(&[x, y]))).unwrap();
            prop_assert_eq!(quotient_set(&z2(), &set), quotient_set_pairwise(&z2(), &set));
        }

        #[test]
        fn symdiff_matches_enumeration(pts in arb_set(), gx in -10i64..10, gy in -10i64..10) {
            let raw: Vec<Vec<i64>> = pts.iter().map(|&(x, y)| vec![x, y]).collect();
            let set = FiniteSubset::new(&z2(), raw.iter().map(|p| GroupElement::new(p))).unwrap();
            let mut dedup = raw.clone();
            dedup.sort();
            dedup.dedup();
            let expected = enumerate_symdiff(&dedup, &[gx, gy]);
            prop_assert_eq!(
                symmetric_difference_measure(&z2(), &set, &GroupElement::new(&[gx, gy])).unwrap(),
                Real::int(expected as i64)
            );
        }

        #[test]
        fn defect_decreases_for_symmetric_intervals(g in -40i64..40, n in 1usize..200) {
            let seq = FolnerSequence::symmetric(z());
            let ge = GroupElement::scalar(g);
            if g != 0 && (2 * n as i64 + 1) > g.abs() {
                prop_assert!(seq.folner_defect(n + 1, &ge).unwrap() < seq.folner_defect(n, &ge).unwrap());
            }
        }

        #[test]
        fn translational_verdict_ignores_order(mut ks in prop::collection::btree_set(-6i64..=6, 1..6), seed in 0u64..100) {
            ks.remove(&0);
            prop_assume!(!ks.is_empty());
            let members: Vec<Homomorphism> = ks.iter().map(|&k| Homomorphism::scalar(k)).collect();
            let mut shuffled = members.clone();
            let len = shuffled.len();
            shuffled.rotate_left((seed as usize) % len);
            shuffled.reverse();
            let a = TranslationalFamily::new(&z(), members).unwrap().verify_translational(&z()).is_pass();
            let b = TranslationalFamily::new(&z(), shuffled).unwrap().verify_translational(&z()).is_pass();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn homomorphisms_are_linear(a in -5i64..5, b in -5i64..5, c in -5i64..5, d in -5i64..5,
                                    g in prop::array::uniform2(-50i64..50), h in prop::array::uniform2(-50i64..50)) {
            let phi = Homomorphism::from_rows(vec![vec![a, b], vec![c, d]]).unwrap();
            prop_assert!(phi.check_linearity(&z2(), &[(GroupElement::new(&g), GroupElement::new(&h))]));
        }
    }
}
