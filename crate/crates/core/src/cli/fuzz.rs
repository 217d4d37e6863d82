//! Seeded randomized trials of the van der Corput inequality chain.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::averaging::{Coords, GroupFunction, HilbertVector};
use crate::cli::report::RunReport;
use crate::error::{Error, Result};
use crate::group::{FiniteSubset, GroupElement, GroupModel};
use crate::real::Real;
use crate::series::Series;
use crate::vdc::{
    avg_norm_inequality, folding_inequality, gamma_quotient_bound_on, triple_avg_inequality, InequalityReport,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    AverageNorm,
    Triple,
    Folding,
    QuotientBound,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::AverageNorm, Family::Triple, Family::Folding, Family::QuotientBound];

    pub fn name(&self) -> &'static str {
        match self {
            Family::AverageNorm => "average-norm",
            Family::Triple => "triple-average",
            Family::Folding => "folding",
            Family::QuotientBound => "quotient-bound",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FuzzOptions {
    pub seed: u64,
    pub trials: usize,
    pub max_set: usize,
    pub max_dim: usize,
    /// Checks the reversed inequalities instead, so a working harness must
    /// report violations.
    pub self_test: bool,
}

/// One randomized instance: two sets and a vector-valued table on `Λ₂Λ₁`.
#[derive(Clone, Debug)]
pub struct Trial {
    pub model: GroupModel,
    pub dim: usize,
    pub inner: Vec<GroupElement>,
    pub outer: Vec<GroupElement>,
    pub values: BTreeMap<GroupElement, Coords>,
}

impl Trial {
    fn random(rng: &mut ChaCha8Rng, model: &GroupModel, max_set: usize, max_dim: usize) -> Trial {
        let reach = 6;
        let pick = |rng: &mut ChaCha8Rng| -> Vec<GroupElement> {
            let k = rng.gen_range(1..=max_set);
            let mut v: Vec<GroupElement> = (0..k)
                .map(|_| {
                    GroupElement::new(&(0..model.rank()).map(|_| rng.gen_range(-reach..=reach)).collect::<Vec<_>>())
                })
                .collect();
            v.sort();
            v.dedup();
            v
        };
        let inner = pick(rng);
        let outer = pick(rng);
        let dim = rng.gen_range(1..=max_dim);
        let mut values = BTreeMap::new();
        let keys = outer
            .iter()
            .flat_map(|g| inner.iter().map(move |h| model.compose_unchecked(g, h)))
            .chain(inner.iter().flat_map(|a| inner.iter().map(move |b| model.quotient(a, b))));
        for k in keys.collect::<Vec<_>>() {
            values.entry(k).or_insert_with(|| {
                Coords((0..dim).map(|_| Real::ratio(rng.gen_range(-9..=9), rng.gen_range(1..=4))).collect())
            });
        }
        Trial { model: model.clone(), dim, inner, outer, values }
    }

    fn function(&self) -> GroupFunction<Coords> {
        let map = self.values.clone();
        let dim = self.dim;
        let bound = map.values().map(|v| v.norm_sq()).fold(Real::one(), Real::max);
        GroupFunction::new("random table", bound, move |g| {
            map.get(g).cloned().unwrap_or_else(|| Coords(vec![Real::zero(); dim]))
        })
    }

    fn describe(&self) -> String {
        let show = |v: &[GroupElement]| v.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = format!(
            "rank {} dim {}\nΛ₁ = {{{}}}\nΛ₂ = {{{}}}\n",
            self.model.rank(),
            self.dim,
            show(&self.inner),
            show(&self.outer)
        );
        for (g, c) in &self.values {
            let cs: Vec<String> = c.0.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "f({g}) = ({})", cs.join(", "));
        }
        s
    }

    /// `Ok(Some(report))` when the inequality holds, `Ok(None)` on a
    /// violation.
    fn evaluate(&self, family: Family, self_test: bool) -> Result<Option<InequalityReport>> {
        let f = self.function();
        let inner = FiniteSubset::new(&self.model, self.inner.iter().cloned())?;
        let outer = FiniteSubset::new(&self.model, self.outer.iter().cloned())?;
        let result = match family {
            Family::AverageNorm => avg_norm_inequality(&self.model, &f, &inner),
            Family::Triple => triple_avg_inequality(&self.model, &f, &inner, &outer),
            Family::Folding => {
                let b = f.sup_bound.clone();
                let g = f.clone();
                let nonneg = GroupFunction::new("norm squared", b, move |h: &GroupElement| g.eval(h).norm_sq());
                folding_inequality(&self.model, &nonneg, &inner, None)
            }
            Family::QuotientBound => {
                let gamma = |h: &GroupElement| f.eval(h).0[0].clone();
                gamma_quotient_bound_on(&self.model, &inner, &gamma)
            }
        };
        match result {
            Ok(r) if self_test && !r.flipped_holds() => Ok(None),
            Ok(r) => Ok(Some(r)),
            Err(Error::InequalityViolation { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Greedily drops set elements while the violation persists.
    fn minimize(mut self, family: Family, self_test: bool) -> Result<Trial> {
        loop {
            let mut shrunk = false;
            for which in 0..2 {
                let mut i = 0;
                while i < self.set(which).len() {
                    if self.set(which).len() == 1 {
                        break;
                    }
                    let mut candidate = self.clone();
                    candidate.set_mut(which).remove(i);
                    if candidate.evaluate(family, self_test)?.is_none() {
                        self = candidate;
                        shrunk = true;
                    } else {
                        i += 1;
                    }
                }
            }
            if !shrunk {
                return Ok(self);
            }
        }
    }

    fn set(&self, which: usize) -> &Vec<GroupElement> {
        if which == 0 {
            &self.inner
        } else {
            &self.outer
        }
    }

    fn set_mut(&mut self, which: usize) -> &mut Vec<GroupElement> {
        if which == 0 {
            &mut self.inner
        } else {
            &mut self.outer
        }
    }
}

/// Runs `trials` instances of every inequality on `Z` and `Z²`.
pub fn run_fuzz(opts: &FuzzOptions) -> Result<RunReport> {
    if opts.max_set == 0 || opts.max_dim == 0 {
        return Err(Error::config("max_set and max_dim must be positive"));
    }
    let mut report = RunReport::new("inequality-fuzz", "inequality-fuzz");
    report.seed = Some(opts.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for rank in [1usize, 2] {
        let model = GroupModel::lattice(rank)?;
        let mut series: Vec<Series> =
            Family::ALL.iter().map(|f| Series::new(format!("{} on Z^{rank}", f.name()), &["lhs", "rhs"])).collect();
        let mut violations = vec![0usize; Family::ALL.len()];
        for t in 0..opts.trials {
            let trial = Trial::random(&mut rng, &model, opts.max_set, opts.max_dim);
            for (i, fam) in Family::ALL.iter().enumerate() {
                match trial.evaluate(*fam, opts.self_test)? {
                    Some(r) => series[i].push(t + 1, Real::int(trial.inner.len() as i64), vec![r.lhs, r.rhs]),
                    None => {
                        violations[i] += 1;
                        if violations[i] == 1 {
                            let w = trial.clone().minimize(*fam, opts.self_test)?;
                            report.notes.push(format!(
                                "minimized witness for {} on Z^{rank} (trial {}):\n{}",
                                fam.name(),
                                t + 1,
                                w.describe()
                            ));
                        }
                    }
                }
            }
        }
        for (i, fam) in Family::ALL.iter().enumerate() {
            let file = report.add_series(format!("{}_z{rank}.csv", fam.name()), series[i].clone());
            let mode = if opts.self_test { " (reversed)" } else { "" };
            report.check(
                format!("{}{mode} on Z^{rank}", fam.name()),
                violations[i] == 0,
                format!("{} trials, {} violations", opts.trials, violations[i]),
                Some(&file),
            );
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(trials: usize, self_test: bool) -> FuzzOptions {
        FuzzOptions { seed: 42, trials, max_set: 10, max_dim: 4, self_test }
    }

    #[test]
    fn zero_trials_is_an_empty_pass() {
        let r = run_fuzz(&opts(0, false)).unwrap();
        assert!(r.all_passed());
        assert!(r.series.iter().all(|(_, s)| s.is_empty()));
    }

    #[test]
    fn small_run_has_no_violations_and_is_deterministic() {
        let a = run_fuzz(&opts(25, false)).unwrap();
        let b = run_fuzz(&opts(25, false)).unwrap();
        assert!(a.all_passed());
        assert_eq!(a.verdicts_csv(), b.verdicts_csv());
        for ((_, x), (_, y)) in a.series.iter().zip(&b.series) {
            assert_eq!(x.to_csv_string(), y.to_csv_string());
        }
    }

    #[test]
    fn reversed_inequalities_are_caught_with_a_small_witness() {
        let r = run_fuzz(&opts(10, true)).unwrap();
        assert!(!r.all_passed());
        assert_eq!(r.exit_code(), 1);
        assert!(r.notes.iter().any(|n| n.contains("minimized witness")));
    }
}
