//! The nonlinear semigroup on both sides of the small-noise limit: Monte Carlo
//! log-moments at finite `n`, the optimal-control value function, and a 1-D
//! semi-Lagrangian resolvent with its Crandall–Liggett iteration.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::models::{scaling_check, Family, Model};
use crate::rate::{action, optimize_path, pinned, MinimizeOptions};
use crate::simulator::{ensemble_final_states, simulate_path, Path, SimConfig};

/// Bounded test functionals `f` entering `e^{n f}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunctional {
    Constant { value: f64 },
    /// `clamp(⟨p, x⟩, −clip, clip)`.
    Linear { p: Vec<f64>, clip: f64 },
    /// `max(−c‖x − center‖², −clip)`.
    Quadratic { c: f64, center: Vec<f64>, clip: f64 },
    /// `height·exp(−‖x − center‖²/width²)`.
    Radial { height: f64, width: f64, center: Vec<f64> },
    /// `inner + constant`.
    Offset { inner: Box<TestFunctional>, constant: f64 },
}

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl TestFunctional {
    pub fn offset(self, constant: f64) -> Self {
        TestFunctional::Offset { inner: Box::new(self), constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunctional::Constant { value } => *value,
            TestFunctional::Linear { p, clip } => {
                p.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().clamp(-clip, *clip)
            }
            TestFunctional::Quadratic { c, center, clip } => (-c * dist2(x, center)).max(-clip),
            TestFunctional::Radial { height, width, center } => height * (-dist2(x, center) / (width * width)).exp(),
            TestFunctional::Offset { inner, constant } => inner.eval(x) + constant,
        }
    }

    /// Gradient, taken as zero wherever the clip is active.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TestFunctional::Constant { .. } => vec![0.0; x.len()],
            TestFunctional::Linear { p, clip } => {
                let v: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
                if v.abs() < *clip {
                    p.clone()
                } else {
                    vec![0.0; x.len()]
                }
            }
            TestFunctional::Quadratic { c, center, clip } => {
                if c * dist2(x, center) < *clip {
                    x.iter().zip(center).map(|(a, b)| -2.0 * c * (a - b)).collect()
                } else {
                    vec![0.0; x.len()]
                }
            }
            TestFunctional::Radial { width, center, .. } => {
                let v = self.eval(x);
                x.iter().zip(center).map(|(a, b)| -2.0 * (a - b) / (width * width) * v).collect()
            }
            TestFunctional::Offset { inner, .. } => inner.gradient(x),
        }
    }

    /// Declared `sup |f|`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            TestFunctional::Constant { value } => value.abs(),
            TestFunctional::Linear { clip, .. } | TestFunctional::Quadratic { clip, .. } => *clip,
            TestFunctional::Radial { height, .. } => height.abs(),
            TestFunctional::Offset { inner, constant } => inner.sup_bound() + constant.abs(),
        }
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.eval(x), self.gradient(x))
    }
}

/// Log-moment estimate with its jackknife error proxy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VnEstimate {
    pub value: f64,
    pub stderr: f64,
    pub members: usize,
    pub aborted: usize,
}

/// `(1/n) log mean exp(n f_i)` evaluated with the maximum factored out.
pub fn log_mean_exp(values: &[f64], n: f64) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().map(|v| (n * (v - max)).exp()).sum::<f64>() / values.len() as f64;
    max + mean.ln() / n
}

/// Log-moment estimate from samples `f(X_i)`, jackknifed over (up to) 10 blocks.
pub fn vn_from_samples(values: &[f64], n: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::DegenerateSample(format!("{} usable member(s)", values.len())));
    }
    let value = log_mean_exp(values, n);
    let blocks = values.len().min(10);
    let size = values.len().div_ceil(blocks);
    let partial: Vec<f64> = (0..blocks)
        .map(|b| {
            let kept: Vec<f64> = values
                .iter()
                .enumerate()
                .filter(|(i, _)| i / size != b)
                .map(|(_, v)| *v)
                .collect();
            log_mean_exp(&kept, n)
        })
        .collect();
    let mean = partial.iter().sum::<f64>() / blocks as f64;
    let bf = blocks as f64;
    let var = (bf - 1.0) / bf * partial.iter().map(|p| (p - mean).powi(2)).sum::<f64>();
    Ok((value, var.sqrt()))
}

/// Endpoints `X_n(t)` of the members that completed, and the abort count.
pub fn endpoint_samples(t: f64, x0: &[f64], model: &Model, cfg: &SimConfig) -> Result<(Vec<Vec<f64>>, usize)> {
    let mut cfg = cfg.clone();
    cfg.horizon = t;
    cfg.record_every = 1;
    let ends = ensemble_final_states(x0, model, &cfg)?;
    let aborted = ends.iter().filter(|e| e.is_none()).count();
    Ok((ends.into_iter().flatten().collect(), aborted))
}

/// Monte Carlo `V_n(t)f(x0) = (1/n) log E[e^{n f(X_n(t))}]`.
///
/// When `scaling_budget` is given, the mode-count versus noise-scale check must
/// pass first.
pub fn vn_estimate(
    t: f64,
    f: &TestFunctional,
    x0: &[f64],
    model: &Model,
    cfg: &SimConfig,
    scaling_budget: Option<f64>,
) -> Result<VnEstimate> {
    let mut out = vn_estimate_many(t, std::slice::from_ref(f), x0, model, cfg, scaling_budget)?;
    Ok(out.remove(0))
}

/// [`vn_estimate`] for several functionals on common random numbers.
pub fn vn_estimate_many(
    t: f64,
    fs: &[TestFunctional],
    x0: &[f64],
    model: &Model,
    cfg: &SimConfig,
    scaling_budget: Option<f64>,
) -> Result<Vec<VnEstimate>> {
    if let (Some(budget), Some((dim, m))) = (scaling_budget, model.spectral_shape()) {
        let report = scaling_check(model.family(), dim, m, model.n(), budget);
        if !report.pass {
            return Err(Error::Condition {
                condition: "mode-count scaling".into(),
                detail: format!("ratio {} exceeds budget {}", report.ratio, budget),
            });
        }
    }
    if t == 0.0 {
        return Ok(fs.iter().map(|f| VnEstimate { value: f.eval(x0), stderr: 0.0, members: cfg.ensemble, aborted: 0 }).collect());
    }
    let (ends, aborted) = endpoint_samples(t, x0, model, cfg)?;
    if ends.is_empty() {
        return Err(Error::AllMembersAborted(aborted));
    }
    fs.iter()
        .map(|f| {
            let values: Vec<f64> = ends.iter().map(|x| f.eval(x)).collect();
            let (value, stderr) = vn_from_samples(&values, model.n())?;
            Ok(VnEstimate { value, stderr, members: ends.len(), aborted })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControlValue {
    /// Larger of `f(x(T)) − action` for the optimized path and `f` at the end
    /// of the uncontrolled flow; both are lower bounds on the supremum.
    pub value: f64,
    pub terminal_reward: f64,
    pub cost: f64,
    /// `f` at the endpoint of the uncontrolled flow.
    pub flow_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub path: Path,
}

/// Limit value `V(t)f(x0) = sup{f(x(t)) − ½∫‖u‖²}` over piecewise-linear paths
/// with `slices` intervals, started from the noise-free flow.
pub fn v_control(
    t: f64,
    f: &TestFunctional,
    x0: &[f64],
    model: &Model,
    slices: usize,
    opts: &MinimizeOptions,
) -> Result<ControlValue> {
    if slices < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 time slices, got {slices}")));
    }
    if x0.len() != model.state_len() {
        return Err(Error::DimensionMismatch { expected: model.state_len(), got: x0.len() });
    }
    let dt = t / slices as f64;
    let flow = simulate_path(x0, model, &SimConfig::new(dt, t).deterministic())?;
    let reward = |x: &[f64]| f.value_and_gradient(x);
    let out = optimize_path(flow.data().to_vec(), model.state_len(), dt, model, opts, Some(&reward))?;
    let path = Path::new(flow.times().to_vec(), model.state_len(), out.nodes)?;
    let cost = action(&path, model, pinned)?.total;
    let terminal_reward = f.eval(path.final_state());
    // the exact uncontrolled flow is feasible at zero cost
    let fine = simulate_path(x0, model, &SimConfig::new(dt / 64.0, t).deterministic().with_record_every(64 * slices))?;
    let flow_value = f.eval(fine.final_state());
    Ok(ControlValue {
        value: (terminal_reward - cost).max(flow_value),
        terminal_reward,
        cost,
        flow_value,
        converged: out.converged,
        iterations: out.iterations,
        path,
    })
}

/// Uniform grid on `[a, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub a: f64,
    pub b: f64,
    pub points: usize,
}

impl Grid1D {
    pub fn new(a: f64, b: f64, points: usize) -> Result<Self> {
        let g = Self { a, b, points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 16 || !(self.b > self.a) {
            return Err(Error::InvalidArgument(format!(
                "grid needs b > a and at least 16 points (a = {}, b = {}, points = {})",
                self.a, self.b, self.points
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.a + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.points).map(|i| f(self.x(i))).collect()
    }

    /// Linear interpolation with constant extrapolation outside `[a, b]`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        if x <= self.a {
            return values[0];
        }
        if x >= self.b {
            return values[self.points - 1];
        }
        let s = (x - self.a) / self.spacing();
        let i = (s.floor() as usize).min(self.points - 2);
        let w = s - i as f64;
        (1.0 - w) * values[i] + w * values[i + 1]
    }

    /// CSV with columns `x, f`.
    pub fn write_csv<W: Write>(&self, w: &mut W, values: &[f64], comments: &[String]) -> io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "x,f")?;
        for (i, v) in values.iter().enumerate() {
            writeln!(w, "{},{}", fmt_f64(self.x(i)), fmt_f64(*v))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventOptions {
    /// Pseudo-time step as a fraction of `α`.
    pub step_fraction: f64,
    pub u_max: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self { step_fraction: 0.125, u_max: 8.0, tol: 1e-8, max_sweeps: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventResult {
    pub values: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Control box actually used (after at most one widening).
    pub u_max: f64,
    /// The optimal control still sat on the box boundary after widening.
    pub box_active: bool,
}

/// One-step Bellman operator of the discounted control problem
/// `sup ∫ e^{−s/α}(α⁻¹h(x) − ½u²) ds` for a scalar model.
///
/// Over a step `Δs` with constant `u` and linear motion the discount is
/// integrated exactly: with `γ = e^{−Δs/α}` and `z = Δs/α`, the running
/// cost weight is `α(1−γ)`, and `h` enters with the trapezoid-type weights
/// `w_b = (1 − γ(1+z))/z` at the foot and `w_a = 1 − γ − w_b` at the start.
/// The maximization over `u ∈ [−U, U]` is exact on the piecewise-linear
/// interpolant.
pub struct Resolvent<'g> {
    grid: &'g Grid1D,
    gamma: f64,
    w_a: f64,
    w_b: f64,
    kappa: f64,
    shift: Vec<f64>,
    slope: f64,
    u_max: f64,
}

impl<'g> Resolvent<'g> {
    pub fn new(alpha: f64, model: &Model, grid: &'g Grid1D, opts: &ResolventOptions) -> Result<Self> {
        grid.validate()?;
        if model.family() != Family::FiniteDimFw || model.state_len() != 1 {
            return Err(Error::Unsupported { family: model.family().name(), what: "1-D resolvent".into() });
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("α must be positive, got {alpha}")));
        }
        let ds = opts.step_fraction * alpha;
        let z = ds / alpha;
        let gamma = (-z).exp();
        let w_b = (1.0 - gamma * (1.0 + z)) / z;
        let w_a = 1.0 - gamma - w_b;
        let (_, sigma) = model.fw_drift_diffusion(&[0.0])?;
        let sigma = sigma[(0, 0)];
        let shift = grid
            .nodes()
            .iter()
            .map(|&x| model.drift(&[x]).map(|b| x + ds * b[0]))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { grid, gamma, w_a, w_b, kappa: 0.5 * alpha * (1.0 - gamma), shift, slope: ds * sigma, u_max: opts.u_max })
    }

    pub fn contraction(&self) -> f64 {
        self.gamma
    }

    /// `(T f)(x_i)` for every node, with a flag for controls on the box boundary.
    pub fn sweep(&self, f: &[f64], h: &[f64]) -> (Vec<f64>, bool) {
        let g: Vec<f64> = f.iter().zip(h).map(|(a, b)| self.gamma * a + self.w_b * b).collect();
        let mut active = false;
        let out = (0..self.grid.points)
            .map(|i| {
                let (best, u) = self.maximize(&g, self.shift[i]);
                // boundary cells feel the extrapolation, not the box
                if (u.abs() - self.u_max).abs() < 1e-12 && i > 1 && i + 2 < self.grid.points {
                    active = true;
                }
                self.w_a * h[i] + best
            })
            .collect();
        (out, active)
    }

    /// `max_u −κu² + G(c0 + slope·u)` over `|u| ≤ U` for piecewise-linear `G`.
    /// On every cell the objective is a concave quadratic in `u`, so the
    /// cell maximum is its stationary point clamped to the cell.
    fn maximize(&self, g: &[f64], c0: f64) -> (f64, f64) {
        let (a, hgrid, n) = (self.grid.a, self.grid.spacing(), self.grid.points);
        let value = |u: f64| -self.kappa * u * u + self.grid.interpolate(g, c0 + self.slope * u);
        if self.slope == 0.0 {
            return (value(0.0), 0.0);
        }
        let u_of = |y: f64| (y - c0) / self.slope;
        let (lo, hi) = (-self.u_max, self.u_max);
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut consider = |ul: f64, ur: f64, stationary: f64| {
            let (ul, ur) = (ul.min(ur).max(lo), ul.max(ur).min(hi));
            if ul > ur {
                return;
            }
            let u = stationary.clamp(ul, ur);
            let v = value(u);
            if v > best.0 {
                best = (v, u);
            }
        };
        // constant extrapolation outside [a, b]: stationary point u = 0
        consider(u_of(a - 1e300), u_of(a), 0.0);
        consider(u_of(self.grid.b), u_of(self.grid.b + 1e300), 0.0);
        let (y1, y2) = (c0 + self.slope * lo, c0 + self.slope * hi);
        let (ymin, ymax) = (y1.min(y2), y1.max(y2));
        let first = (((ymin - a) / hgrid).floor().max(0.0)) as usize;
        let last = (((ymax - a) / hgrid).floor().max(0.0) as usize).min(n - 2);
        for j in first..=last {
            let (ya, yb) = (a + j as f64 * hgrid, a + (j + 1) as f64 * hgrid);
            let s = self.slope * (g[j + 1] - g[j]) / hgrid;
            consider(u_of(ya), u_of(yb), s / (2.0 * self.kappa));
        }
        best
    }

    /// Fixed point of the Bellman operator, started from `h`.
    pub fn solve(&self, h: &[f64], tol: f64, max_sweeps: usize) -> (Vec<f64>, usize, bool, bool) {
        let mut f = h.to_vec();
        let mut active = false;
        for sweep in 1..=max_sweeps {
            let (next, act) = self.sweep(&f, h);
            let diff = next.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            f = next;
            if diff <= tol {
                return (f, sweep, true, act);
            }
            active = act;
        }
        (f, max_sweeps, false, active)
    }
}

/// `(I − αH)⁻¹h` on the grid for a scalar model, widening the control box once
/// if the optimal control touches it.
pub fn resolvent_1d(h: &[f64], alpha: f64, model: &Model, grid: &Grid1D, opts: &ResolventOptions) -> Result<ResolventResult> {
    if h.len() != grid.points {
        return Err(Error::DimensionMismatch { expected: grid.points, got: h.len() });
    }
    let mut o = opts.clone();
    for attempt in 0..2 {
        let r = Resolvent::new(alpha, model, grid, &o)?;
        let (values, sweeps, converged, active) = r.solve(h, o.tol, o.max_sweeps);
        if !active || attempt == 1 {
            return Ok(ResolventResult { values, sweeps, converged, u_max: o.u_max, box_active: active });
        }
        o.u_max *= 2.0;
    }
    unreachable!()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateResult {
    pub values: Vec<f64>,
    pub resolvents: usize,
    pub converged: bool,
    pub box_active: bool,
}

/// `(I − (t/k)H)^{−k} h`.
pub fn semigroup_iterate(h: &[f64], t: f64, k: usize, model: &Model, grid: &Grid1D, opts: &ResolventOptions) -> Result<IterateResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let alpha = t / k as f64;
    let mut f = h.to_vec();
    let (mut converged, mut active) = (true, false);
    for _ in 0..k {
        let r = resolvent_1d(&f, alpha, model, grid, opts)?;
        converged &= r.converged;
        active |= r.box_active;
        f = r.values;
    }
    Ok(IterateResult { values: f, resolvents: k, converged, box_active: active })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CauchyReport {
    pub ks: Vec<usize>,
    pub iterates: Vec<Vec<f64>>,
    /// `‖V_{k_{i+1}} − V_{k_i}‖_∞`.
    pub differences: Vec<f64>,
}

/// Iterates for each `k` and the sup-norm gaps between successive ones.
pub fn semigroup_cauchy(h: &[f64], t: f64, ks: &[usize], model: &Model, grid: &Grid1D, opts: &ResolventOptions) -> Result<CauchyReport> {
    let iterates = ks
        .iter()
        .map(|&k| semigroup_iterate(h, t, k, model, grid, opts).map(|r| r.values))
        .collect::<Result<Vec<_>>>()?;
    let differences = iterates
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    Ok(CauchyReport { ks: ks.to_vec(), iterates, differences })
}

/// Parameters swept by [`rate_from_semigroup`]: clipped linear `p·x` and
/// clipped quadratics `−c(x − y)²` centered at the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySweep {
    pub slopes: Vec<f64>,
    pub curvatures: Vec<f64>,
    pub clip: f64,
    /// Number of resolvent steps per semigroup evaluation.
    pub k: usize,
}

impl Default for FamilySweep {
    fn default() -> Self {
        let slopes = (-16..=16).map(|i| i as f64 * 0.25).collect();
        Self { slopes, curvatures: vec![0.5, 1.0, 2.0, 4.0], clip: 5.0, k: 256 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateBound {
    pub value: f64,
    pub best: Option<TestFunctional>,
    pub evaluated: usize,
    /// Candidates discarded because the control box was active.
    pub skipped: usize,
}

/// Lower bound `sup_f f(y) − V(t)f(x)` over the sweep, with `V(t)f` from
/// [`semigroup_iterate`]. Candidates whose evaluation hit the control box are
/// skipped, since a truncated control set can only lower `V(t)f`.
pub fn rate_from_semigroup(
    t: f64,
    y: f64,
    x: f64,
    model: &Model,
    grid: &Grid1D,
    sweep: &FamilySweep,
    opts: &ResolventOptions,
) -> Result<RateBound> {
    rates_from_semigroup(t, &[(x, y)], model, grid, sweep, opts).map(|mut v| v.remove(0))
}

/// [`rate_from_semigroup`] for several `(x, y)` pairs sharing semigroup evaluations.
pub fn rates_from_semigroup(
    t: f64,
    pairs: &[(f64, f64)],
    model: &Model,
    grid: &Grid1D,
    sweep: &FamilySweep,
    opts: &ResolventOptions,
) -> Result<Vec<RateBound>> {
    let mut out: Vec<RateBound> = pairs.iter().map(|_| RateBound { value: 0.0, best: None, evaluated: 0, skipped: 0 }).collect();
    let consider = |f: TestFunctional, which: &[usize], out: &mut Vec<RateBound>| -> Result<()> {
        let h = grid.sample(|s| f.eval(&[s]));
        let it = semigroup_iterate(&h, t, sweep.k, model, grid, opts)?;
        for &i in which {
            let (x, y) = pairs[i];
            if it.box_active || !it.converged {
                out[i].skipped += 1;
                continue;
            }
            out[i].evaluated += 1;
            let v = f.eval(&[y]) - grid.interpolate(&it.values, x);
            if v > out[i].value {
                out[i].value = v;
                out[i].best = Some(f.clone());
            }
        }
        Ok(())
    };
    let all: Vec<usize> = (0..pairs.len()).collect();
    for &p in &sweep.slopes {
        consider(TestFunctional::Linear { p: vec![p], clip: sweep.clip }, &all, &mut out)?;
    }
    for (i, &(_, y)) in pairs.iter().enumerate() {
        for &c in &sweep.curvatures {
            consider(TestFunctional::Quadratic { c, center: vec![y], clip: sweep.clip }, &[i], &mut out)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelSpec;
    use crate::oracles;

    fn ou(n: f64) -> Model {
        Model::new(ModelSpec::ornstein_uhlenbeck(n)).unwrap()
    }

    fn brownian() -> Model {
        Model::new(ModelSpec::FiniteDimFw {
            n: 1.0,
            drift: crate::models::FwDrift::Linear { matrix: vec![vec![0.0]] },
            sigma: crate::models::FwSigma::Scaled { scale: 1.0 },
        })
        .unwrap()
    }

    #[test]
    fn log_mean_exp_is_stable() {
        assert_eq!(log_mean_exp(&[3.0; 5], 1e6), 3.0);
        let v = log_mean_exp(&[0.0, 1000.0], 10.0);
        assert!((v - (1000.0 - 2f64.ln() / 10.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_and_time_zero() {
        let model = ou(16.0);
        let cfg = SimConfig::new(0.01, 1.0).with_ensemble(50).with_seed(1);
        let c = vn_estimate(1.0, &TestFunctional::Constant { value: 0.7 }, &[0.3], &model, &cfg, None).unwrap();
        assert_eq!(c.value, 0.7);
        let f = TestFunctional::Linear { p: vec![2.0], clip: 5.0 };
        let z = vn_estimate(0.0, &f, &[0.3], &model, &cfg, None).unwrap();
        assert_eq!(z.value, f.eval(&[0.3]));
    }

    #[test]
    fn shift_and_monotonicity_on_common_noise() {
        let model = ou(16.0);
        let cfg = SimConfig::new(0.01, 1.0).with_ensemble(200).with_seed(2);
        let fs = [
            TestFunctional::Radial { height: 1.0, width: 0.5, center: vec![0.2] },
            TestFunctional::Radial { height: 1.5, width: 0.5, center: vec![0.2] },
            TestFunctional::Quadratic { c: 1.0, center: vec![0.0], clip: 4.0 },
        ];
        let est = vn_estimate_many(1.0, &fs, &[0.5], &model, &cfg, None).unwrap();
        assert!(est[0].value <= est[1].value);
        // shift invariance: f and f + c through the sample formula
        let (ends, _) = endpoint_samples(1.0, &[0.5], &model, &cfg).unwrap();
        let v: Vec<f64> = ends.iter().map(|x| fs[2].eval(x)).collect();
        let shifted: Vec<f64> = v.iter().map(|a| a + 0.37).collect();
        let (a, _) = vn_from_samples(&v, 16.0).unwrap();
        let (b, _) = vn_from_samples(&shifted, 16.0).unwrap();
        assert!((b - a - 0.37).abs() < 1e-12);
    }

    #[test]
    fn linear_functional_is_exact_for_ou() {
        // for Gaussian X(t), (1/n) log E e^{n p X} = p m + p² var n / 2 with var = (1 − e^{−2t})/(2n)
        let model = ou(4.0);
        let p = 0.3;
        let cfg = SimConfig::new(0.01, 1.0).with_ensemble(4000).with_seed(5);
        let est = vn_estimate(1.0, &TestFunctional::Linear { p: vec![p], clip: 50.0 }, &[1.0], &model, &cfg, None).unwrap();
        let t = 1.0f64;
        let expect = p * (-t).exp() + p * p * (1.0 - (-2.0 * t).exp()) / 4.0;
        assert!((est.value - expect).abs() < 4.0 * est.stderr.max(1e-3), "{} vs {expect} ± {}", est.value, est.stderr);
    }

    #[test]
    fn degenerate_ensembles() {
        assert!(matches!(vn_from_samples(&[1.0], 4.0), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn v_control_linear_closed_form() {
        let model = ou(1.0);
        let (p, x0, t) = (0.8, 0.5, 1.0f64);
        let f = TestFunctional::Linear { p: vec![p], clip: 50.0 };
        let v = v_control(t, &f, &[x0], &model, 200, &MinimizeOptions::default()).unwrap();
        let closed = p * x0 * (-t).exp() + p * p * (1.0 - (-2.0 * t).exp()) / 4.0;
        let (qp, _) = oracles::linear_terminal_qp(1.0, 1.0, x0, p, t, 200);
        assert!((closed - qp).abs() < 1e-5);
        assert!(v.converged);
        assert!((v.value - qp).abs() < 1e-8, "{} vs {qp}", v.value);
    }

    #[test]
    fn v_control_constant_and_feasibility() {
        let model = ou(1.0);
        let c = v_control(1.0, &TestFunctional::Constant { value: 2.0 }, &[0.4], &model, 20, &MinimizeOptions::default()).unwrap();
        assert_eq!(c.value, 2.0);
        let f = TestFunctional::Quadratic { c: 2.0, center: vec![1.0], clip: 3.0 };
        let v = v_control(1.0, &f, &[0.0], &model, 50, &MinimizeOptions::default()).unwrap();
        let flow_end = (-1.0f64).exp() * 0.0;
        assert!(v.value >= f.eval(&[flow_end]) - 1e-9);
        // quadratic closed form of the limit value
        let m = 0.0;
        let s = 1.0 - (-2.0f64).exp();
        let closed = -2.0 * (m - 1.0f64).powi(2) / (1.0 + 2.0 * s);
        assert!((v.value - closed).abs() < 1e-3, "{} vs {closed}", v.value);
    }

    #[test]
    fn resolvent_constant_fixed_point() {
        let grid = Grid1D::new(-3.0, 3.0, 61).unwrap();
        let h = vec![0.7; 61];
        let r = resolvent_1d(&h, 0.5, &ou(1.0), &grid, &ResolventOptions::default()).unwrap();
        assert!(r.values.iter().all(|v| (v - 0.7).abs() < 1e-12));
        let it = semigroup_iterate(&h, 1.0, 4, &ou(1.0), &grid, &ResolventOptions::default()).unwrap();
        assert!(it.values.iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn resolvent_contraction_and_monotonicity() {
        let grid = Grid1D::new(-3.0, 3.0, 61).unwrap();
        let model = ou(1.0);
        let r = Resolvent::new(0.4, &model, &grid, &ResolventOptions::default()).unwrap();
        let h = grid.sample(|x| (-x * x).max(-2.0));
        let f = grid.sample(|x| x.sin());
        let g = grid.sample(|x| 0.5 * x.cos());
        let (tf, _) = r.sweep(&f, &h);
        let (tg, _) = r.sweep(&g, &h);
        let lhs = tf.iter().zip(&tg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let rhs = f.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(lhs <= r.contraction() * rhs + 1e-14);

        let h1 = grid.sample(|x| (-x * x).max(-2.0));
        let h2: Vec<f64> = h1.iter().enumerate().map(|(i, v)| v + 0.1 * ((i % 7) as f64)).collect();
        let a = resolvent_1d(&h1, 0.4, &model, &grid, &ResolventOptions::default()).unwrap().values;
        let b = resolvent_1d(&h2, 0.4, &model, &grid, &ResolventOptions::default()).unwrap().values;
        assert!(a.iter().zip(&b).all(|(p, q)| p <= &(q + 1e-12)));
    }

    #[test]
    fn resolvent_matches_brute_force_control() {
        let grid = Grid1D::new(-4.0, 4.0, 401).unwrap();
        let h = |x: f64| (-x * x).max(-4.0);
        let values = grid.sample(h);
        let alpha = 0.5;
        let x0 = 1.0;
        let r = resolvent_1d(&values, alpha, &brownian(), &grid, &ResolventOptions::default()).unwrap();
        let scheme = grid.interpolate(&r.values, x0);
        let brute = oracles::discounted_brute_force(&h, alpha, x0);
        assert!((scheme - brute).abs() < 1e-2, "{scheme} vs {brute}");
    }

    #[test]
    fn iterate_k1_is_resolvent() {
        let grid = Grid1D::new(-3.0, 3.0, 61).unwrap();
        let h = grid.sample(|x| (0.5 * x).clamp(-1.0, 1.0));
        let a = semigroup_iterate(&h, 0.7, 1, &ou(1.0), &grid, &ResolventOptions::default()).unwrap();
        let b = resolvent_1d(&h, 0.7, &ou(1.0), &grid, &ResolventOptions::default()).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn grid_interpolation() {
        let g = Grid1D::new(0.0, 1.0, 17).unwrap();
        let v = g.sample(|x| 2.0 * x + 1.0);
        assert!((g.interpolate(&v, 0.3) - 1.6).abs() < 1e-14);
        assert_eq!(g.interpolate(&v, -1.0), 1.0);
        assert_eq!(g.interpolate(&v, 2.0), 3.0);
        assert!(Grid1D::new(0.0, 1.0, 8).is_err());
    }
}
