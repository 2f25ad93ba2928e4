//! Runners for every experiment kind. Each returns an [`Outcome`]; nothing
//! here touches the file system.

use ldp_core::hamiltonians::{lyapunov_suite, model_free_energy, poincare_check, random_fields, RadialTestFn};
use ldp_core::models::dissipativity_check;
use ldp_core::rate::{action, gradient_check, minimize_action, pinned};
use ldp_core::semigroup::{rates_from_semigroup, semigroup_cauchy, v_control, vn_estimate_many, TestFunctional};
use ldp_core::simulator::{ensemble_final_states, member_seed, simulate_path};
use ldp_core::spectral::{default_grid_size, product_eigenvalue_bound, product_eigenvalue_sum, to_grid, to_spectral};
use ldp_core::tataru::{semigroup_checks, tataru_suite};
use ldp_core::{BasisIndex, Family, Model, SpectralField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::*;
use crate::error::Result;
use crate::output::{b, f, u, Outcome, Table};
use crate::slope;

/// Runs a validated configuration. All randomness flows from `cfg.seed`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let seed = cfg.seed;
    match &cfg.experiment {
        Experiment::Simulate(p) => simulate(p, seed),
        Experiment::LdpSlope(p) => slope::run(p, seed),
        Experiment::Map(p) => map(p, seed),
        Experiment::SemigroupCompare(p) => semigroup_compare(p, seed),
        Experiment::ResolventIterate(p) => resolvent_iterate(p),
        Experiment::Containment(p) => containment(p, seed),
        Experiment::TataruSuite(p) => tataru(p, seed),
        Experiment::DissipativitySuite(p) => structural(p, seed),
        Experiment::Lyapunov(p) => lyapunov(p, seed),
    }
}

fn rel(a: f64, reference: f64) -> f64 {
    (a - reference).abs() / reference.abs()
}

fn state_columns(len: usize) -> Vec<String> {
    (1..=len).map(|k| format!("c{k}")).collect()
}

fn simulate(p: &SimulateParams, seed: u64) -> Result<Outcome> {
    let model = Model::new(p.model.clone())?;
    let sim = p.sim.clone().with_seed(seed);
    let path = simulate_path(&p.x0, &model, &sim)?;
    let ends = ensemble_final_states(&p.x0, &model, &sim)?;
    let aborted = ends.iter().filter(|e| e.is_none()).count();
    let mut cols = vec!["member".to_string()];
    cols.extend(state_columns(model.state_len()));
    let mut table = Table { name: "final_states".into(), columns: cols, rows: Vec::new() };
    for (i, e) in ends.iter().enumerate() {
        if let Some(x) = e {
            let mut row = vec![u(i)];
            row.extend(x.iter().map(|v| f(*v)));
            table.push(row);
        }
    }
    let energy = match model.family() {
        Family::AllenCahn | Family::CahnHilliard => Some(model_free_energy(&model, path.final_state())?),
        _ => None,
    };
    let result = json!({
        "members": sim.ensemble,
        "aborted": aborted,
        "final_state": path.final_state(),
        "final_free_energy": energy,
    });
    let mut out = Outcome::new(aborted == 0, result);
    out.tables.push(table);
    out.paths.push(("member0".into(), path));
    Ok(out)
}

#[derive(Serialize)]
struct Level {
    slices: usize,
    action: f64,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
}

fn map(p: &MapParams, seed: u64) -> Result<Outcome> {
    let model = Model::new(p.model.clone())?;
    let mut levels = Vec::with_capacity(p.refinements);
    let mut paths = Vec::with_capacity(p.refinements + 1);
    for r in 0..p.refinements {
        let slices = p.slices << r;
        let (path, rep) = minimize_action(&p.x0, &p.x1, p.horizon, &model, slices, &p.minimize, None)?;
        levels.push(Level { slices, action: rep.total, converged: rep.converged, iterations: rep.iterations, grad_norm: rep.grad_norm });
        paths.push((format!("map_{slices}"), path));
    }
    let decreasing = levels.windows(2).all(|w| w[1].action <= w[0].action);
    let converged = levels.iter().all(|l| l.converged);
    let finest = &paths.last().expect("at least one level").1;
    let gradient_error = gradient_check(finest, &model, p.gradient_samples, p.gradient_amplitude, member_seed(seed, 0))?;

    let flow = simulate_path(&p.flow.x0, &model, &flow_sim(&p.flow))?;
    let flow_action = action(&flow, &model, pinned)?.total;
    paths.push(("flow".into(), flow));

    let pass = converged && decreasing && gradient_error <= p.gradient_tolerance && flow_action <= p.flow.tolerance;
    let mut table = Table::new("refinement", &["slices", "action", "converged", "iterations", "grad_norm"]);
    for l in &levels {
        table.push(vec![u(l.slices), f(l.action), b(l.converged), u(l.iterations), f(l.grad_norm)]);
    }
    let result = json!({
        "levels": levels,
        "converged": converged,
        "action_decreasing": decreasing,
        "gradient_error": gradient_error,
        "flow_action": flow_action,
    });
    let mut out = Outcome::new(pass, result);
    out.tables.push(table);
    out.paths = paths;
    Ok(out)
}

fn functional_kind(t: &TestFunctional) -> &'static str {
    match t {
        TestFunctional::Constant { .. } => "constant",
        TestFunctional::Linear { .. } => "linear",
        TestFunctional::Quadratic { .. } => "quadratic",
        TestFunctional::Radial { .. } => "radial",
        TestFunctional::Offset { .. } => "offset",
    }
}

#[derive(Serialize)]
struct Comparison {
    vn: f64,
    vn_stderr: f64,
    v_control: f64,
    relative_error: f64,
    converged: bool,
    pass: bool,
}

#[derive(Serialize)]
struct Bracket {
    x: f64,
    y: f64,
    lower: f64,
    action: f64,
    evaluated: usize,
    skipped: usize,
    converged: bool,
    pass: bool,
}

fn semigroup_compare(p: &SemigroupCompareParams, seed: u64) -> Result<Outcome> {
    let model = Model::new(p.model.clone())?;
    let mut sim = p.sim.clone().with_seed(seed);
    sim.horizon = p.t;
    let vn = vn_estimate_many(p.t, &p.functionals, &p.x0, &model, &sim, None)?;
    let mut comparisons = Vec::with_capacity(p.functionals.len());
    for (fun, est) in p.functionals.iter().zip(&vn) {
        let vc = v_control(p.t, fun, &p.x0, &model, p.slices, &p.minimize)?;
        let relative_error = rel(est.value, vc.value);
        comparisons.push(Comparison {
            vn: est.value,
            vn_stderr: est.stderr,
            v_control: vc.value,
            relative_error,
            converged: vc.converged,
            pass: vc.converged && relative_error <= p.tolerance,
        });
    }
    let lower = rates_from_semigroup(p.t, &p.pairs, &model, &p.grid, &p.sweep, &p.resolvent)?;
    let mut brackets = Vec::with_capacity(p.pairs.len());
    for (&(x, y), lb) in p.pairs.iter().zip(&lower) {
        let (_, rep) = minimize_action(&[x], &[y], p.t, &model, p.action_slices, &p.minimize, None)?;
        brackets.push(Bracket {
            x,
            y,
            lower: lb.value,
            action: rep.total,
            evaluated: lb.evaluated,
            skipped: lb.skipped,
            converged: rep.converged,
            pass: rep.converged && lb.value <= rep.total + p.duality_tolerance,
        });
    }
    let pass = comparisons.iter().all(|c| c.pass) && brackets.iter().all(|c| c.pass);
    let mut t1 = Table::new("functionals", &["index", "kind", "vn", "vn_stderr", "v_control", "relative_error", "pass"]);
    for (i, (c, fun)) in comparisons.iter().zip(&p.functionals).enumerate() {
        t1.push(vec![u(i), functional_kind(fun).into(), f(c.vn), f(c.vn_stderr), f(c.v_control), f(c.relative_error), b(c.pass)]);
    }
    let mut t2 = Table::new("duality", &["x", "y", "lower", "action", "gap", "evaluated", "skipped", "pass"]);
    for c in &brackets {
        t2.push(vec![f(c.x), f(c.y), f(c.lower), f(c.action), f(c.lower - c.action), u(c.evaluated), u(c.skipped), b(c.pass)]);
    }
    let mut out = Outcome::new(pass, json!({ "functionals": comparisons, "duality": brackets }));
    out.tables = vec![t1, t2];
    Ok(out)
}

fn resolvent_iterate(p: &ResolventIterateParams) -> Result<Outcome> {
    let model = Model::new(p.model.clone())?;
    let h = p.grid.sample(|s| p.h.eval(&[s]));
    let cauchy = semigroup_cauchy(&h, p.t, &p.ks, &model, &p.grid, &p.resolvent)?;
    let monotone = cauchy.differences.windows(2).all(|w| w[1] < w[0]);
    let finest = cauchy.iterates.last().expect("at least two step counts");
    let mut table = Table::new("comparison", &["x", "iterate", "v_control", "relative_error", "pass"]);
    let mut worst: f64 = 0.0;
    let mut converged = true;
    for &x in &p.check_points {
        let vc = v_control(p.t, &p.h, &[x], &model, p.slices, &p.minimize)?;
        let it = p.grid.interpolate(finest, x);
        let e = rel(it, vc.value);
        converged &= vc.converged;
        worst = worst.max(e);
        table.push(vec![f(x), f(it), f(vc.value), f(e), b(e <= p.tolerance)]);
    }
    let mut diffs = Table::new("cauchy", &["k", "k_next", "sup_difference"]);
    for (w, d) in cauchy.ks.windows(2).zip(&cauchy.differences) {
        diffs.push(vec![u(w[0]), u(w[1]), f(*d)]);
    }
    let mut cols = vec!["x"];
    let names: Vec<String> = cauchy.ks.iter().map(|k| format!("k{k}")).collect();
    cols.extend(names.iter().map(String::as_str));
    let mut iterates = Table::new("iterates", &cols);
    for (j, x) in p.grid.nodes().iter().enumerate() {
        let mut row = vec![f(*x)];
        row.extend(cauchy.iterates.iter().map(|v| f(v[j])));
        iterates.push(row);
    }
    let pass = monotone && converged && worst <= p.tolerance;
    let result = json!({
        "differences": cauchy.differences,
        "monotone": monotone,
        "max_relative_error": worst,
        "controls_converged": converged,
    });
    let mut out = Outcome::new(pass, result);
    out.tables = vec![diffs, table, iterates];
    Ok(out)
}

fn containment(p: &ContainmentParams, seed: u64) -> Result<Outcome> {
    let model = Model::new(p.model.clone())?;
    let mut cfg = p.containment.clone();
    cfg.sim.seed = seed;
    let report = ldp_core::hamiltonians::containment_experiment(&model, &p.x0, &cfg)?;
    let decreasing = report.cells.windows(2).all(|w| w[1].frequency < w[0].frequency);
    let negative = report.slope.is_some_and(|s| s < 0.0);
    let mut table = Table::new("exceedance", &["n", "trials", "hits", "aborted", "frequency", "censored"]);
    for c in &report.cells {
        table.push(vec![f(c.n), u(c.trials), u(c.hits), u(c.aborted), f(c.frequency), b(c.censored)]);
    }
    let result = json!({
        "report": report,
        "frequencies_decreasing": decreasing,
        "slope_negative": negative,
    });
    let mut out = Outcome::new(decreasing && negative, result);
    out.tables.push(table);
    Ok(out)
}

fn tataru(p: &TataruSuiteParams, seed: u64) -> Result<Outcome> {
    let mut table = Table::new("suites", &["semigroup", "suite", "samples", "max_violation", "pass"]);
    let mut rows = Vec::new();
    for (i, spec) in p.semigroups.iter().enumerate() {
        let s = spec.build()?;
        let mut suite = p.suite.clone();
        suite.seed = member_seed(seed, 2 * i as u64);
        let mut reports = tataru_suite(&s, &suite)?;
        reports.extend(semigroup_checks(&s, p.semigroup_samples, suite.amplitude, member_seed(seed, 2 * i as u64 + 1)));
        for r in reports {
            table.push(vec![spec.label(), r.suite.clone(), u(r.samples), f(r.max_violation), b(r.pass)]);
            rows.push(json!({ "semigroup": spec.label(), "report": r }));
        }
    }
    let pass = table.rows.iter().all(|r| r[4] == "true");
    let max_violation = table.rows.iter().map(|r| r[3].parse::<f64>().unwrap_or(f64::NAN)).fold(f64::NEG_INFINITY, f64::max);
    let mut out = Outcome::new(pass, json!({ "max_violation": max_violation, "suites": rows }));
    out.tables.push(table);
    Ok(out)
}

/// One structural check: largest violation over its samples (≤ 0 passes
/// unless a tolerance is given).
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub check: String,
    pub samples: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(check: impl Into<String>, samples: usize, max_violation: f64, tolerance: f64) -> Self {
        Self { check: check.into(), samples, max_violation, tolerance, pass: max_violation <= tolerance }
    }
}

fn random_field(rng: &mut ChaCha8Rng, dim: usize, m: usize) -> Result<SpectralField> {
    let len = m.pow(dim as u32);
    Ok(SpectralField::from_coeffs(dim, m, (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect())?)
}

fn structural(p: &DissipativityParams, seed: u64) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(member_seed(seed, 0));

    for (i, spec) in p.models.iter().enumerate() {
        let model = Model::new(spec.clone())?;
        let r = dissipativity_check(&model, p.pairs, p.amplitude, member_seed(seed, 1 + i as u64))?;
        let (dim, m) = model.spectral_shape().unwrap_or((0, model.state_len()));
        checks.push(Check::new(format!("dissipativity-{}-d{dim}-m{m}", model.family()), r.trials, r.max_inner, r.tol));
    }

    // ratio − 1 of the product eigenvalue sum against its closed-form bound
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    for dim in 1..=p.max_dim {
        for m in 1..=p.max_m {
            worst = worst.max(product_eigenvalue_sum(dim, m) / product_eigenvalue_bound(dim, m) - 1.0);
            cases += 1;
        }
    }
    checks.push(Check::new("eigenvalue-sum-bound", cases, worst, 0.0));

    let (mut excess, mut sharp, mut count) = (f64::NEG_INFINITY, 0.0f64, 0);
    for dim in 1..=p.max_dim {
        for _ in 0..p.poincare_fields {
            let (lhs, rhs) = poincare_check(&random_field(&mut rng, dim, p.poincare_m)?);
            excess = excess.max(lhs - rhs * (1.0 + 1e-12));
            count += 1;
        }
        // the first non-constant mode attains the constant
        let mut k = vec![1; dim];
        k[0] = 2;
        let (lhs, rhs) = poincare_check(&SpectralField::mode(dim, p.poincare_m, &BasisIndex::new(k)?, 1.0)?);
        sharp = sharp.max((lhs / rhs - 1.0).abs());
    }
    checks.push(Check::new("poincare", count, excess, 0.0));
    checks.push(Check::new("poincare-sharpness", p.max_dim, sharp, 1e-12));

    let (mut parseval, mut ortho, mut modes) = (0.0f64, 0.0f64, 0);
    let m = p.transform_m;
    for dim in 1..=p.max_dim {
        let q = default_grid_size(m);
        for _ in 0..20 {
            let x = random_field(&mut rng, dim, m)?;
            parseval = parseval.max((to_grid(&x, q)?.quadrature_norm() - x.norm()).abs());
        }
        for flat in 0..m.pow(dim as u32) {
            let k = BasisIndex::from_flat(dim, m, flat);
            let back = to_spectral(&to_grid(&SpectralField::mode(dim, m, &k, 1.0)?, q)?, m)?;
            for (j, c) in back.coeffs().iter().enumerate() {
                let want = if j == flat { 1.0 } else { 0.0 };
                ortho = ortho.max((c - want).abs());
            }
            modes += 1;
        }
    }
    checks.push(Check::new("parseval", 20 * p.max_dim, parseval, p.transform_tolerance));
    checks.push(Check::new("orthonormality", modes, ortho, p.transform_tolerance));

    let det = Model::new(p.determinism_model.clone())?;
    let sim = p.determinism_sim.clone().with_seed(member_seed(seed, 100));
    let x0 = random_fields(&det, 1, 1.0, member_seed(seed, 101)).remove(0);
    let bits = |v: &[f64]| v.iter().map(|a| a.to_bits()).collect::<Vec<_>>();
    let runs = [0, 1].map(|_| -> Result<(Vec<u64>, Vec<Vec<u64>>)> {
        let path = simulate_path(&x0, &det, &sim)?;
        let ends = ensemble_final_states(&x0, &det, &sim)?;
        Ok((bits(path.data()), ends.iter().map(|e| e.as_deref().map(bits).unwrap_or_default()).collect()))
    });
    let [a, c] = runs;
    let identical = a? == c?;
    checks.push(Check::new("bitwise-determinism", 2, if identical { 0.0 } else { 1.0 }, 0.0));

    let ch = Model::new(p.cahn_hilliard.clone())?;
    let mut worst_mean: f64 = 0.0;
    let trials = 100;
    for x in random_fields(&ch, trials, 2.0, member_seed(seed, 102)) {
        worst_mean = worst_mean.max(ch.drift(&x)?[0].abs());
    }
    checks.push(Check::new("cahn-hilliard-constant-mode", trials, worst_mean, 0.0));

    let pass = checks.iter().all(|c| c.pass);
    let mut table = Table::new("checks", &["check", "samples", "max_violation", "tolerance", "pass"]);
    for c in &checks {
        table.push(vec![c.check.clone(), u(c.samples), f(c.max_violation), f(c.tolerance), b(c.pass)]);
    }
    let mut out = Outcome::new(pass, json!({ "checks": checks }));
    out.tables.push(table);
    Ok(out)
}

fn lyapunov(p: &LyapunovParams, seed: u64) -> Result<Outcome> {
    let model = Model::new(p.model.clone())?;
    let suite = lyapunov_suite(&model, p.fields, p.amplitude, member_seed(seed, 0), p.tolerance)?;
    let f_log = RadialTestFn::log_free_energy(&model);
    let mut derivative_error: f64 = 0.0;
    for (i, x) in random_fields(&model, p.derivative_fields, p.amplitude, member_seed(seed, 1)).iter().enumerate() {
        derivative_error = derivative_error.max(f_log.derivative_check(&model, x, 3, 1e-5, member_seed(seed, 2 + i as u64))?);
    }
    let (dim, m) = model.spectral_shape().expect("validated as Allen–Cahn");
    let bound = ldp_core::hamiltonians::lyapunov_bound(dim, m, model.n(), model.potential().expect("Allen–Cahn").sup_d2());
    let pass = suite.failures == 0 && derivative_error <= p.derivative_tolerance;
    let mut table = Table::new("lyapunov", &["fields", "failures", "bound", "max_excess", "derivative_error"]);
    table.push(vec![u(suite.checked), u(suite.failures), f(bound), f(suite.max_excess), f(derivative_error)]);
    let result = json!({ "suite": suite, "bound": bound, "derivative_error": derivative_error });
    let mut out = Outcome::new(pass, result);
    out.tables.push(table);
    Ok(out)
}
