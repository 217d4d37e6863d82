//! Executes a configured experiment and collects its report.

use std::sync::Arc;

use crate::averaging::{default_eps_grid, kvn_equivalence, GroupFunction, HilbertVector};
use crate::cli::config::{gamma_shifts, parse_real, Expectation, ExperimentConfig, ExperimentKind};
use crate::cli::fuzz::{run_fuzz, FuzzOptions};
use crate::cli::report::{slug, RunReport};
use crate::error::{Error, Result};
use crate::group::{FolnerSequence, Homomorphism};
use crate::mixing::{
    ergodic_average, gamma_estimate_vs_closed_form, l2_wm_average, order_k_wm_series, pairwise_wm,
    product_equivalence_check, theorem_4_4_pipeline, MixingSeries,
};
use crate::real::Real;
use crate::series::{Series, Trend};
use crate::vdc::{
    avg_norm_inequality, folding_inequality, gamma_quotient_bound_on, triple_avg_inequality, vdc_verdict, GammaSource,
    VdcOptions,
};

/// Runs `cfg`, with `seed` overriding the configured seed.
pub fn run_config(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<RunReport> {
    let seed = seed.or(cfg.seed);
    let mut report = match cfg.experiment {
        ExperimentKind::InequalityFuzz => fuzz_config(cfg, seed)?,
        ExperimentKind::Wm | ExperimentKind::Ergodic | ExperimentKind::L2wm => pairwise(cfg)?,
        ExperimentKind::ProductEquivalence => product_equivalence(cfg)?,
        ExperimentKind::VdcSuite => vdc_suite(cfg)?,
        ExperimentKind::Gamma => gamma(cfg)?,
        ExperimentKind::OrderK => order_k(cfg)?,
        ExperimentKind::AllOrders => all_orders(cfg)?,
        ExperimentKind::Kvn => kvn(cfg)?,
    };
    report.id = cfg.id.clone().unwrap_or_else(|| cfg.experiment.name().to_string());
    report.kind = cfg.experiment.name().to_string();
    report.seed = seed;
    report.expected_fail = cfg.expect == Expectation::Fail;
    Ok(report)
}

fn fuzz_config(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<RunReport> {
    let seed = seed.ok_or_else(|| Error::config("inequality-fuzz needs a `seed`"))?;
    run_fuzz(&FuzzOptions {
        seed,
        trials: cfg.trials.unwrap_or(1000),
        max_set: cfg.max_set.unwrap_or(30),
        max_dim: cfg.max_dim.unwrap_or(8),
        self_test: cfg.self_test,
    })
}

fn record(report: &mut RunReport, name: &str, file: &str, m: MixingSeries) {
    let detail = format!("{} → {}: {}", m.series.name, m.target, m.outcome);
    let f = report.add_series(file, m.series);
    report.check(name, m.outcome.passed, detail, Some(&f));
}

fn first_phi(cfg: &ExperimentConfig, seq: &FolnerSequence) -> Result<Homomorphism> {
    let phis = cfg.homomorphisms(&seq.model)?;
    Ok(phis.into_iter().next().unwrap_or_else(|| Homomorphism::identity(seq.model.rank())))
}

fn pairwise(cfg: &ExperimentConfig) -> Result<RunReport> {
    let seq = cfg.sequence()?;
    let sys = cfg.system(seq.model.rank())?;
    let obs = cfg.observables(&sys)?;
    let (a, b) = match obs.as_slice() {
        [a] => (a, a),
        [a, b] => (a, b),
        _ => return Err(Error::config("pairwise experiments take one or two observables")),
    };
    let phi = first_phi(cfg, &seq)?;
    let (n, trend) = (cfg.n_max()?, cfg.trend()?);
    let mut report = RunReport::new("", "");
    let (name, m) = match cfg.experiment {
        ExperimentKind::Wm => ("wm", pairwise_wm(&sys, a, b, &phi, &seq, n, &trend)?),
        ExperimentKind::Ergodic => ("ergodic", ergodic_average(&sys, a, b, &phi, &seq, n, &trend)?),
        _ => ("l2wm", l2_wm_average(&sys, a, b, &phi, &seq, n, &trend)?),
    };
    record(&mut report, name, &format!("{name}.csv"), m);
    report.notes.push(sys.precision_note());
    Ok(report)
}

fn product_equivalence(cfg: &ExperimentConfig) -> Result<RunReport> {
    let seq = cfg.sequence()?;
    let sys = cfg.system(seq.model.rank())?;
    let obs = cfg.observables(&sys)?;
    let (a0, a1) = match obs.as_slice() {
        [a] => (a, a),
        [a, b] => (a, b),
        _ => return Err(Error::config("product-equivalence takes one or two events")),
    };
    let (f1, f2) = (sys.centered(a0)?, sys.centered(a1)?);
    let phi = first_phi(cfg, &seq)?;
    let m = product_equivalence_check(&sys, a0, a1, &f1, &f2, &phi, &seq, cfg.n_max()?, &cfg.trend()?)?;
    let consistent = m.consistent();
    let mut report = RunReport::new("", "");
    for (name, s) in m.entries() {
        record(&mut report, name, &format!("{}.csv", slug(name)), s.clone());
    }
    // Consistency is a property of the run, so it is reported but never
    // counted as an expected failure.
    report.notes.push(format!("verdict matrix {}", if consistent { "CONSISTENT" } else { "INCONSISTENT" }));
    if !consistent {
        return Err(Error::InvariantViolation("equivalent formulations disagree".into()));
    }
    report.notes.push(sys.precision_note());
    Ok(report)
}

fn named_function(name: &str) -> Result<GroupFunction<Real>> {
    Ok(match name {
        "squares" => GroupFunction::squares(),
        "cubes" => GroupFunction::cubes(),
        "evens" => GroupFunction::evens(),
        other => match other.strip_prefix("constant:") {
            Some(c) => GroupFunction::constant(parse_real(c, "function")?),
            None => return Err(Error::config(format!("unknown function `{other}`"))),
        },
    })
}

fn vdc_suite(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new("", "");
    let n = cfg.n_max()?;
    let m_list = cfg.m_list()?;
    let opts = VdcOptions { m_list: m_list.clone(), n_max: n, condition_trend: None, conclusion_trend: None };
    if let Some(name) = &cfg.function {
        let seq = cfg.sequence()?;
        let f = if name == "alternating" {
            GroupFunction::alternating(2)
        } else {
            GroupFunction::from_scalar(named_function(name)?, 1)
        };
        chain_on_sequence(&mut report, &f, &seq, &m_list)?;
        let v = vdc_verdict(&f, &seq, &opts, GammaSource::Estimated { n_max: n })?;
        push_vdc(&mut report, "", v);
        return Ok(report);
    }
    let exp = cfg.mixing_experiment()?;
    report.hypotheses = exp.check_hypotheses()?;
    let u = exp.u_function(exp.k())?;
    chain_on_sequence(&mut report, &u, &exp.seq, &m_list)?;
    let closed = {
        let exp = exp.clone();
        let k = exp.k();
        move |h: &crate::group::GroupElement| exp.gamma_closed_form(k, h).expect("validated experiment")
    };
    let v = vdc_verdict(&u, &exp.seq, &opts, GammaSource::Closed(Arc::new(closed)))?;
    push_vdc(&mut report, "", v);
    report.notes.push(exp.system.precision_note());
    Ok(report)
}

/// The inequality chain on `Λ_m` for every `m`; violations are errors.
fn chain_on_sequence<V: HilbertVector + 'static>(
    report: &mut RunReport,
    f: &GroupFunction<V>,
    seq: &FolnerSequence,
    m_list: &[usize],
) -> Result<()> {
    let model = &seq.model;
    let mut lines = Vec::new();
    for &m in m_list {
        let set = seq.set(m)?;
        let small = seq.set(1)?;
        lines.push(avg_norm_inequality(model, f, &set)?);
        lines.push(triple_avg_inequality(model, f, &small, &set)?);
        let g = f.clone();
        let nonneg = GroupFunction::new("norm squared", f.sup_bound.square(), move |h| g.eval(h).norm_sq());
        lines.push(folding_inequality(model, &nonneg, &set, None)?);
        let inner = f.clone();
        let first = f.eval(&model.identity());
        let gamma = move |h: &crate::group::GroupElement| inner.eval(h).inner(&first);
        lines.push(gamma_quotient_bound_on(model, &set, &gamma)?);
    }
    report.check(
        "inequality chain",
        lines.iter().all(|r| r.holds()),
        format!("{} instances on Λ_m, m ∈ {m_list:?}", lines.len()),
        None,
    );
    Ok(())
}

fn push_vdc(report: &mut RunReport, prefix: &str, v: crate::vdc::VdcVerdict) {
    let c = report.add_series(format!("{prefix}vdc_condition.csv"), v.condition);
    report.check(
        format!("{prefix}vdc condition"),
        v.condition_outcome.passed,
        v.condition_outcome.to_string(),
        Some(&c),
    );
    let n = report.add_series(format!("{prefix}vdc_conclusion.csv"), v.conclusion);
    report.check(
        format!("{prefix}vdc conclusion"),
        v.conclusion_outcome.passed,
        v.conclusion_outcome.to_string(),
        Some(&n),
    );
    let uni: Vec<String> = v.uniformity.iter().map(|(m, d)| format!("m={m}: {}", d.to_f64())).collect();
    report.notes.push(format!(
        "{prefix}vdc verdict {} (γ from {}; uniform defect {})",
        v.verdict,
        v.gamma_source,
        uni.join(", ")
    ));
    for (k, val) in v.metadata {
        report.notes.push(format!("{prefix}{k}: {val}"));
    }
}

fn gamma(cfg: &ExperimentConfig) -> Result<RunReport> {
    let exp = cfg.mixing_experiment()?;
    let mut report = RunReport::new("", "");
    report.hypotheses = exp.check_hypotheses()?;
    let k = exp.k();
    for h in gamma_shifts(cfg, &exp.seq.model)? {
        let c = gamma_estimate_vs_closed_form(&exp, k, &h, exp.n_max)?;
        let outcome = exp.trend.evaluate(&c.series, 0, &c.closed);
        let exact = match c.exact_from {
            Some(n0) => format!("exact from n = {n0}"),
            None => "not yet exact".into(),
        };
        let detail = format!(
            "γ = {}, {} collisions, last at n = {}, {exact}; {outcome}",
            c.closed,
            c.collisions.len(),
            c.collisions_settled_from
        );
        let f = report.add_series(format!("gamma_h_{}.csv", slug(&h.to_string())), c.series);
        report.check(format!("γ estimate at h = {h}"), outcome.passed, detail, Some(&f));
    }
    Ok(report)
}

fn order_k(cfg: &ExperimentConfig) -> Result<RunReport> {
    let exp = cfg.mixing_experiment()?;
    let mut report = RunReport::new("", "");
    report.hypotheses = exp.check_hypotheses()?;
    let r = order_k_wm_series(&exp)?;
    let detail =
        format!("{} indices with nonzero deviation, max squared deviation {}", r.nonzero_at.len(), r.max_square);
    let f = report.add_series("order.csv", r.series.clone());
    report.check("squared deviation → 0", r.square.passed, format!("{}; {detail}", r.square), Some(&f));
    report.check("absolute deviation → 0", r.abs.passed, r.abs.to_string(), Some(&f));
    report.check(
        "correlation → product of means",
        r.correlation.passed,
        format!("target {}; {}", r.product_of_means, r.correlation),
        Some(&f),
    );
    report.check("squared and absolute agree", r.bridge_consistent(), "", Some(&f));
    if let Some((norm, outcome)) = r.norm {
        let nf = report.add_series("norm.csv", norm);
        report.check("norm of average → 0", outcome.passed, outcome.to_string(), Some(&nf));
    }
    report.notes.push(exp.system.precision_note());
    Ok(report)
}

fn all_orders(cfg: &ExperimentConfig) -> Result<RunReport> {
    let exp = cfg.mixing_experiment()?;
    let mut report = RunReport::new("", "");
    let r = theorem_4_4_pipeline(&exp)?;
    report.hypotheses = r.hypotheses;
    for w in r.wm_checks {
        let on = if w.on_quotients { "quotients" } else { "sets" };
        let name = format!("wm φ = {}, pair {:?}, on {on}", w.phi, w.pair);
        let file = format!("wm/{}.csv", slug(&name));
        record(&mut report, &name, &file, w.result);
    }
    if let Some(why) = &r.refusal {
        report.check("pipeline", false, format!("refused: {why}"), None);
        return Ok(report);
    }
    for s in r.stages {
        let j = s.level;
        let p = format!("stage{j}_");
        let mut tele = Series::new(format!("stage {j} telescoping bound over m"), &["lhs", "rhs"]);
        for (m, t) in &s.telescoping {
            tele.push(*m, exp.seq.measure(*m)?, vec![t.lhs.clone(), t.rhs.clone()]);
        }
        let holds = s.telescoping.iter().all(|(_, t)| t.holds());
        let detail: Vec<String> = s.telescoping.iter().map(|(m, t)| format!("m={m}: {} ≤ {}", t.lhs, t.rhs)).collect();
        let t = report.add_series(format!("{p}telescoping.csv"), tele);
        report.check(format!("stage {j} telescoping bound"), holds, detail.join("; "), Some(&t));
        let q = report.add_series(format!("{p}quotient_bound.csv"), s.quotient_bound);
        report.check(
            format!("stage {j} quotient bound decays"),
            s.quotient_rhs.passed,
            s.quotient_rhs.to_string(),
            Some(&q),
        );
        push_vdc(&mut report, &p, s.vdc);
        let o = report.add_series(format!("{p}order.csv"), s.order.series.clone());
        report.check(
            format!("stage {j} squared deviation → 0"),
            s.order.square.passed,
            s.order.square.to_string(),
            Some(&o),
        );
        report.check(format!("stage {j} squared and absolute agree"), s.order.bridge_consistent(), "", Some(&o));
        report.check(
            format!("stage {j} correlation → product of means"),
            s.order.implication_holds(),
            s.order.correlation.to_string(),
            Some(&o),
        );
        report.check(
            format!("stage {j} verdict"),
            s.verdict == crate::series::Verdict::Pass,
            s.witness.unwrap_or_else(|| s.verdict.to_string()),
            None,
        );
    }
    report.notes.push(format!("pipeline verdict {}", r.verdict));
    report.notes.push(exp.system.precision_note());
    Ok(report)
}

fn kvn(cfg: &ExperimentConfig) -> Result<RunReport> {
    let seq = cfg.sequence()?;
    let f = named_function(cfg.function.as_deref().ok_or_else(|| Error::config("kvn needs a `function`"))?)?;
    let eps = cfg.eps()?.unwrap_or_else(default_eps_grid);
    let n = cfg.n_max()?;
    let trend = match &cfg.tau {
        Some(_) => cfg.trend()?,
        None => Trend::from_rate(Real::one() / seq.measure(n)?.sqrt()),
    };
    let r = kvn_equivalence(&f, &seq, &eps, n, &trend)?;
    let mut report = RunReport::new("", "");
    let d = report.add_series("density.csv", r.density.series.clone());
    let outs: Vec<String> = r.density.outcomes.iter().map(|o| o.to_string()).collect();
    report.check("density → 0", r.density_to_zero(), outs.join("; "), Some(&d));
    let a = report.add_series("average.csv", r.average.clone());
    report.check("average → 0", r.average_to_zero(), r.average_outcome.to_string(), Some(&a));
    if !r.consistent {
        return Err(Error::InvariantViolation("density and average verdicts disagree".into()));
    }
    Ok(report)
}
