//! Experiment configuration files and their translation into models.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::dynamics::{Angle, CylinderPoly, MPSystem, Observable, Permutation, StepFunction, TrigPoly};
use crate::error::{Error, Result};
use crate::group::{ClosureRule, FolnerSequence, GroupElement, GroupModel, Homomorphism, TranslationalFamily};
use crate::mixing::MixingExperiment;
use crate::real::Real;
use crate::series::Trend;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Wm,
    Ergodic,
    L2wm,
    ProductEquivalence,
    VdcSuite,
    Gamma,
    OrderK,
    #[serde(rename = "theorem-4-4")]
    AllOrders,
    InequalityFuzz,
    Kvn,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Wm => "wm",
            ExperimentKind::Ergodic => "ergodic",
            ExperimentKind::L2wm => "l2wm",
            ExperimentKind::ProductEquivalence => "product-equivalence",
            ExperimentKind::VdcSuite => "vdc-suite",
            ExperimentKind::Gamma => "gamma",
            ExperimentKind::OrderK => "order-k",
            ExperimentKind::AllOrders => "theorem-4-4",
            ExperimentKind::InequalityFuzz => "inequality-fuzz",
            ExperimentKind::Kvn => "kvn",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    #[default]
    Pass,
    Fail,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub id: Option<String>,
    pub seed: Option<u64>,
    pub n_max: Option<usize>,
    #[serde(default)]
    pub expect: Expectation,
    pub m_list: Option<Vec<usize>>,
    /// Trend threshold, e.g. `"1/100"`.
    pub tau: Option<String>,
    /// `μ(Λ_n⁻¹Λ_n) ≤ c μ(Λ_n)`.
    pub c_bound: Option<String>,
    pub eps: Option<Vec<String>>,
    /// Group function for `kvn` and function-based `vdc-suite` runs.
    pub function: Option<String>,
    /// Shifts for `gamma` runs; defaults to every `h` with `|h|∞ ≤ 10`.
    pub h: Option<Vec<Vec<i64>>>,
    pub trials: Option<usize>,
    pub max_set: Option<usize>,
    pub max_dim: Option<usize>,
    #[serde(default)]
    pub self_test: bool,
    pub group: Option<GroupConfig>,
    pub sequence: Option<SequenceConfig>,
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub observables: Vec<ObservableConfig>,
    #[serde(default)]
    pub phis: Vec<PhiConfig>,
    pub family: Option<FamilyConfig>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub kind: String,
    pub rank: Option<usize>,
    pub modulus: Option<i64>,
    pub spacing: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    /// `z-symmetric`, `z-initial`, `z2-squares` or `scaled-ball`.
    pub preset: Option<String>,
    /// `symmetric`, `initial` or `ball` over the declared group.
    pub kind: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: String,
    pub weights: Option<Vec<String>>,
    /// Angles as `"golden"`, rationals `"p/q"` or decimals.
    pub alpha: Option<Vec<String>>,
    pub matrix: Option<Vec<Vec<i64>>>,
    pub generators: Option<Vec<Vec<usize>>>,
    pub left: Option<Box<SystemConfig>>,
    pub right: Option<Box<SystemConfig>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub kind: String,
    pub symbol: Option<u32>,
    pub site: Option<Vec<i64>>,
    pub sites: Option<Vec<Vec<i64>>>,
    pub symbols: Option<Vec<u32>>,
    pub a: Option<String>,
    pub b: Option<String>,
    pub k: Option<Vec<i64>>,
    pub amplitude: Option<String>,
    pub values: Option<Vec<String>>,
    pub value: Option<String>,
    pub left: Option<Box<ObservableConfig>>,
    pub right: Option<Box<ObservableConfig>>,
    #[serde(default)]
    pub centered: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum PhiConfig {
    Scalar(i64),
    Matrix(Vec<Vec<i64>>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    /// Entries range over `{±1, ..., ±k}`.
    pub k: i64,
    /// `none`, `nonzero-diagonal` or `nonzero-matrices`.
    pub closure: Option<String>,
}

pub fn parse_real(s: &str, what: &str) -> Result<Real> {
    s.trim().parse::<Real>().map_err(|e| Error::config(format!("{what}: cannot parse `{s}`: {}", e.0)))
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::config(format!("missing `{what}`")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn n_max(&self) -> Result<usize> {
        let n = *need(&self.n_max, "n_max")?;
        if n == 0 {
            return Err(Error::config("n_max must be positive"));
        }
        Ok(n)
    }

    pub fn m_list(&self) -> Result<Vec<usize>> {
        let m = self.m_list.clone().unwrap_or_else(|| vec![1, 2, 4, 8, 16]);
        if m.is_empty() || m.contains(&0) {
            return Err(Error::config("m_list must be nonempty and positive"));
        }
        Ok(m)
    }

    pub fn trend(&self) -> Result<Trend> {
        match &self.tau {
            Some(t) => Ok(Trend::new(parse_real(t, "tau")?)),
            None => Ok(Trend::default()),
        }
    }

    pub fn eps(&self) -> Result<Option<Vec<Real>>> {
        self.eps.as_ref().map(|v| v.iter().map(|e| parse_real(e, "eps")).collect()).transpose()
    }

    fn group_model(&self) -> Result<Option<GroupModel>> {
        let Some(g) = &self.group else { return Ok(None) };
        let model = match g.kind.as_str() {
            "lattice" => GroupModel::lattice(g.rank.unwrap_or(1))?,
            "cyclic" => GroupModel::cyclic(*need(&g.modulus, "group.modulus")?)?,
            "scaled" => {
                GroupModel::scaled(g.rank.unwrap_or(1), parse_real(need(&g.spacing, "group.spacing")?, "spacing")?)?
            }
            other => return Err(Error::config(format!("unknown group kind `{other}`"))),
        };
        Ok(Some(model))
    }

    pub fn sequence(&self) -> Result<FolnerSequence> {
        let s = need(&self.sequence, "[sequence]")?;
        let declared = self.group_model()?;
        if let Some(p) = &s.preset {
            if s.kind.is_some() {
                return Err(Error::config("sequence: give either `preset` or `kind`"));
            }
            let seq = sequence_preset(p)?;
            if let Some(m) = declared {
                if m.rank() != seq.model.rank() || m.kind != seq.model.kind {
                    return Err(Error::config(format!("sequence preset `{p}` does not live on the declared group")));
                }
            }
            return Ok(seq);
        }
        let model = declared.unwrap_or_else(GroupModel::integers);
        match need(&s.kind, "sequence.kind or sequence.preset")?.as_str() {
            "symmetric" => Ok(FolnerSequence::symmetric(model)),
            "initial" => Ok(FolnerSequence::initial(model)),
            "ball" => Ok(FolnerSequence::ball(model)),
            other => Err(Error::config(format!("unknown sequence kind `{other}`"))),
        }
    }

    pub fn system(&self, rank: usize) -> Result<MPSystem> {
        build_system(need(&self.system, "[system]")?, rank)
    }

    pub fn observables(&self, sys: &MPSystem) -> Result<Vec<Observable>> {
        let out: Vec<Observable> = self.observables.iter().map(|o| build_observable(o, sys)).collect::<Result<_>>()?;
        for f in &out {
            sys.validate(f).map_err(|e| Error::config(format!("observable {f}: {e}")))?;
        }
        Ok(out)
    }

    pub fn homomorphisms(&self, model: &GroupModel) -> Result<Vec<Homomorphism>> {
        self.phis
            .iter()
            .map(|p| {
                let h = match p {
                    PhiConfig::Scalar(k) => Homomorphism::diagonal(&vec![*k; model.rank()]),
                    PhiConfig::Matrix(rows) => Homomorphism::from_rows(rows.clone())?,
                };
                h.check(model).map_err(|e| Error::config(format!("φ = {h}: {e}")))?;
                Ok(h)
            })
            .collect()
    }

    /// Declared family, or `{±1..±K}` entries with `K` the largest entry in
    /// use and a closure rule matching the shape of the `φ`'s.
    pub fn family(&self, model: &GroupModel, phis: &[Homomorphism]) -> Result<TranslationalFamily> {
        let diagonal = phis.iter().all(Homomorphism::is_diagonal);
        let widest = phis.iter().flat_map(|p| p.rows().iter().flatten()).map(|v| v.abs()).max().unwrap_or(1);
        let (k, closure) = match &self.family {
            Some(f) => (f.k, f.closure.clone()),
            None => (widest.max(1), None),
        };
        if k < 1 {
            return Err(Error::config("family.k must be at least 1"));
        }
        let rule = match closure.as_deref() {
            None if diagonal => Some(ClosureRule::NonzeroDiagonal),
            None => Some(ClosureRule::NonzeroMatrices),
            Some("none") => None,
            Some("nonzero-diagonal") => Some(ClosureRule::NonzeroDiagonal),
            Some("nonzero-matrices") => Some(ClosureRule::NonzeroMatrices),
            Some(other) => return Err(Error::config(format!("unknown closure rule `{other}`"))),
        };
        let family = diagonal_family(model, k)?;
        Ok(match rule {
            Some(r) => family.with_closure(r),
            None => family,
        })
    }

    pub fn mixing_experiment(&self) -> Result<MixingExperiment> {
        let seq = self.sequence()?;
        let system = self.system(seq.model.rank())?;
        let observables = self.observables(&system)?;
        let phis = self.homomorphisms(&seq.model)?;
        let family = self.family(&seq.model, &phis)?;
        let c_bound = match &self.c_bound {
            Some(c) => parse_real(c, "c_bound")?,
            None => Real::int(1i64 << seq.model.rank().min(62)),
        };
        Ok(MixingExperiment {
            system: Arc::new(system),
            seq,
            family,
            phis,
            observables,
            n_max: self.n_max()?,
            c_bound,
            m_list: self.m_list()?,
            trend: self.trend()?,
        })
    }
}

/// Diagonal matrices with entries in `{±1, ..., ±k}`.
fn diagonal_family(model: &GroupModel, k: i64) -> Result<TranslationalFamily> {
    let entries: Vec<i64> = (1..=k).flat_map(|v| [-v, v]).collect();
    let mut members: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..model.rank() {
        members =
            members.into_iter().flat_map(|m| entries.iter().map(move |&e| [m.clone(), vec![e]].concat())).collect();
    }
    let members: Vec<Homomorphism> = members.iter().map(|d| Homomorphism::diagonal(d)).collect();
    TranslationalFamily::new(model, members).map_err(|e| Error::config(format!("family: {e}")))
}

pub fn sequence_preset(name: &str) -> Result<FolnerSequence> {
    match name {
        "z-symmetric" => Ok(FolnerSequence::symmetric(GroupModel::integers())),
        "z-initial" => Ok(FolnerSequence::initial(GroupModel::integers())),
        "z2-squares" => Ok(FolnerSequence::symmetric(GroupModel::lattice(2)?)),
        "scaled-ball" => Ok(FolnerSequence::ball(GroupModel::scaled(2, Real::ratio(1, 8))?)),
        other => Err(Error::config(format!("unknown sequence preset `{other}`"))),
    }
}

fn parse_angle(s: &str) -> Result<Angle> {
    if s.trim() == "golden" {
        return Ok(Angle::golden());
    }
    let v = parse_real(s, "alpha")?;
    if v.is_exact() {
        Angle::rational(v)
    } else {
        Ok(Angle::float(v.to_f64()))
    }
}

fn parse_reals(v: &Option<Vec<String>>, what: &str) -> Result<Vec<Real>> {
    need(v, what)?.iter().map(|s| parse_real(s, what)).collect()
}

fn build_system(c: &SystemConfig, rank: usize) -> Result<MPSystem> {
    let sys = match c.kind.as_str() {
        "bernoulli" => match &c.weights {
            Some(_) => MPSystem::bernoulli(rank, parse_reals(&c.weights, "system.weights")?)?,
            None => MPSystem::fair_coin(rank),
        },
        "rotation" => {
            let alpha = match &c.alpha {
                Some(a) => a.iter().map(|s| parse_angle(s)).collect::<Result<_>>()?,
                None => vec![Angle::golden(); rank],
            };
            MPSystem::rotation(alpha)?
        }
        "catmap" => MPSystem::cat_map(),
        "endomorphism" => MPSystem::endomorphism(need(&c.matrix, "system.matrix")?.clone())?,
        "finite" => {
            let gens = need(&c.generators, "system.generators")?
                .iter()
                .map(|g| Permutation::new(g.clone()).ok_or_else(|| Error::config("generator is not a permutation")))
                .collect::<Result<_>>()?;
            MPSystem::finite(parse_reals(&c.weights, "system.weights")?, gens)?
        }
        "trivial" => MPSystem::trivial(parse_reals(&c.weights, "system.weights")?)?,
        "product" => {
            let l = build_system(need(&c.left, "system.left")?, rank)?;
            let r = build_system(need(&c.right, "system.right")?, rank)?;
            MPSystem::product(l, r)?
        }
        other => return Err(Error::config(format!("unknown system kind `{other}`"))),
    };
    if sys.group.rank() != rank {
        return Err(Error::config(format!(
            "system acts by a rank-{} group but the sequence lives in rank {rank}",
            sys.group.rank()
        )));
    }
    Ok(sys)
}

/// The constant function `c` in the algebra of `sys`.
fn constant_in(sys: &MPSystem, c: Real) -> Result<Observable> {
    use crate::dynamics::SystemKind;
    Ok(match &sys.kind {
        SystemKind::Bernoulli { .. } => Observable::Cylinder(CylinderPoly::constant(c)),
        SystemKind::Rotation { .. } => Observable::Step(StepFunction::constant(c)),
        SystemKind::Endomorphism { matrix, .. } => Observable::Trig(TrigPoly::constant(matrix.len(), c)),
        SystemKind::Finite { weights, .. } => Observable::Table(vec![c; weights.len()]),
        SystemKind::Product(a, b) => Observable::tensor(constant_in(a, c)?, constant_in(b, Real::one())?),
    })
}

fn build_observable(c: &ObservableConfig, sys: &MPSystem) -> Result<Observable> {
    let f = match c.kind.as_str() {
        "site" => {
            let site = c.site.clone().unwrap_or_else(|| vec![0; sys.group.rank()]);
            Observable::cylinder(&[(&site, c.symbol.unwrap_or(0))])?
        }
        "cylinder" => {
            let sites = need(&c.sites, "observable.sites")?;
            let symbols = need(&c.symbols, "observable.symbols")?;
            if sites.len() != symbols.len() {
                return Err(Error::config("cylinder: sites and symbols differ in length"));
            }
            let cons: Vec<(&[i64], u32)> = sites.iter().map(Vec::as_slice).zip(symbols.iter().copied()).collect();
            Observable::cylinder(&cons)?
        }
        "arc" => Observable::arc(
            parse_real(need(&c.a, "observable.a")?, "a")?,
            parse_real(need(&c.b, "observable.b")?, "b")?,
        ),
        "cosine" => {
            let amp = c.amplitude.as_deref().map(|s| parse_real(s, "amplitude")).transpose()?.unwrap_or_else(Real::one);
            Observable::Trig(TrigPoly::cosine(need(&c.k, "observable.k")?, amp))
        }
        "table" => Observable::Table(parse_reals(&c.values, "observable.values")?),
        "constant" => constant_in(sys, parse_real(need(&c.value, "observable.value")?, "value")?)?,
        "tensor" => {
            let crate::dynamics::SystemKind::Product(a, b) = &sys.kind else {
                return Err(Error::config("tensor observables need a product system"));
            };
            Observable::tensor(
                build_observable(need(&c.left, "observable.left")?, a)?,
                build_observable(need(&c.right, "observable.right")?, b)?,
            )
        }
        other => return Err(Error::config(format!("unknown observable kind `{other}`"))),
    };
    if c.centered {
        sys.centered(&f)
    } else {
        Ok(f)
    }
}

/// `h` values for `gamma` runs.
pub fn gamma_shifts(cfg: &ExperimentConfig, model: &GroupModel) -> Result<Vec<GroupElement>> {
    if let Some(h) = &cfg.h {
        return h.iter().map(|c| model.element(c).map_err(|e| Error::config(format!("h: {e}")))).collect();
    }
    let r = 10i64;
    let mut out = vec![Vec::new()];
    for _ in 0..model.rank() {
        out = out.into_iter().flat_map(|v: Vec<i64>| (-r..=r).map(move |x| [v.clone(), vec![x]].concat())).collect();
    }
    out.iter().map(|c| model.element(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_toml(
            r#"
experiment = "wm"
n_max = 10
[sequence]
preset = "z-initial"
[system]
kind = "bernoulli"
[[observables]]
kind = "site"
"#,
        )
        .unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Wm);
        let seq = cfg.sequence().unwrap();
        let sys = cfg.system(seq.model.rank()).unwrap();
        assert_eq!(cfg.observables(&sys).unwrap(), vec![Observable::single_site(1, 0)]);
    }

    #[test]
    fn unknown_keys_and_kinds_are_config_errors() {
        let e = ExperimentConfig::from_toml("experiment = \"wm\"\nbogus = 1\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = ExperimentConfig::from_toml("experiment = \"nope\"\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn diagonal_family_for_z2() {
        let model = GroupModel::lattice(2).unwrap();
        let fam = diagonal_family(&model, 2).unwrap();
        assert_eq!(fam.members().len(), 16);
        assert!(fam.contains(&model, &Homomorphism::diagonal(&[-2, 1])));
    }

    #[test]
    fn default_gamma_shifts_cover_the_box() {
        let cfg = ExperimentConfig::from_toml("experiment = \"gamma\"\n").unwrap();
        assert_eq!(gamma_shifts(&cfg, &GroupModel::integers()).unwrap().len(), 21);
    }
}
