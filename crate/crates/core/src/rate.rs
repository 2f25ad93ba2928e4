//! Discretized action functionals and their minimization.
//!
//! A discrete path is the piecewise-linear interpolant of nodes `x_0, …, x_N`
//! on a uniform time grid. On each interval `ẋ` is constant and the control
//! solves `B(x(t)) u(t) = ẋ − b(x(t))`; the action `I0(x_0) + ½∫‖u‖² dt` is
//! integrated with four-point Gauss–Legendre per interval. Refining the grid
//! enlarges the path space, so minimal values can only decrease.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::simulator::Path;

/// Four-point Gauss–Legendre nodes and weights on `[0, 1]`.
const GAUSS: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_9),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_1),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_1),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_9),
];

/// Interval-wise breakdown of the action of a discrete path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub total: f64,
    pub initial_cost: f64,
    pub per_interval: Vec<f64>,
    /// Midpoint controls, one row per interval, flattened.
    pub controls: Vec<f64>,
    pub control_times: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖∇‖/√dt` at the returned path (zero when not minimized).
    pub grad_norm: f64,
}

fn uniform_dt(path: &Path) -> Result<f64> {
    let t = path.times();
    if t.len() < 2 {
        return Err(Error::InvalidArgument("path needs at least two nodes".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    for w in t.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-12 * dt.max(1.0) {
            return Err(Error::InvalidArgument("path times must be uniform".into()));
        }
    }
    Ok(dt)
}

fn check_model(path: &Path, model: &Model) -> Result<()> {
    if path.state_len() != model.state_len() {
        return Err(Error::DimensionMismatch { expected: model.state_len(), got: path.state_len() });
    }
    Ok(())
}

/// Node-wise control reconstruction: `ẋ` by centered differences in the
/// interior and one-sided second-order differences at the ends.
pub fn control_residual(path: &Path, model: &Model) -> Result<Path> {
    check_model(path, model)?;
    let dt = uniform_dt(path)?;
    let n = path.len();
    if n < 3 {
        return Err(Error::InvalidArgument("control reconstruction needs at least three nodes".into()));
    }
    let len = path.state_len();
    let mut data = Vec::with_capacity(n * len);
    for i in 0..n {
        let xdot: Vec<f64> = (0..len)
            .map(|k| {
                let s = |j: usize| path.state(j)[k];
                if i == 0 {
                    (-3.0 * s(0) + 4.0 * s(1) - s(2)) / (2.0 * dt)
                } else if i == n - 1 {
                    (3.0 * s(n - 1) - 4.0 * s(n - 2) + s(n - 3)) / (2.0 * dt)
                } else {
                    (s(i + 1) - s(i - 1)) / (2.0 * dt)
                }
            })
            .collect();
        let x = path.state(i);
        let b = model.drift(x)?;
        let g: Vec<f64> = xdot.iter().zip(&b).map(|(a, c)| a - c).collect();
        data.extend(model.residual_control(x, &g)?);
    }
    Path::new(path.times().to_vec(), len, data)
}

/// Action of a path with initial cost `i0`. Reported controls are taken at
/// interval midpoints.
pub fn action(path: &Path, model: &Model, i0: impl Fn(&[f64]) -> f64) -> Result<ActionReport> {
    check_model(path, model)?;
    let dt = uniform_dt(path)?;
    let len = path.state_len();
    let t = path.times();
    let mut per_interval = Vec::with_capacity(path.len() - 1);
    let mut controls = Vec::with_capacity((path.len() - 1) * len);
    let mut control_times = Vec::with_capacity(path.len() - 1);
    let mut x = vec![0.0; len];
    let mut g = vec![0.0; len];
    for i in 0..path.len() - 1 {
        let (a, b) = (path.state(i), path.state(i + 1));
        let mut value = 0.0;
        for &(s, w) in &GAUSS {
            residual_at(model, a, b, s, dt, &mut x, &mut g);
            value += 0.5 * dt * w * model.residual_energy(&x, &g)?.0;
        }
        per_interval.push(value);
        residual_at(model, a, b, 0.5, dt, &mut x, &mut g);
        controls.extend(model.residual_control(&x, &g)?);
        control_times.push(0.5 * (t[i] + t[i + 1]));
    }
    let initial_cost = i0(path.state(0));
    let total = initial_cost + per_interval.iter().sum::<f64>();
    Ok(ActionReport {
        total,
        initial_cost,
        per_interval,
        controls,
        control_times,
        converged: true,
        iterations: 0,
        grad_norm: 0.0,
    })
}

/// State `x = (1−s)a + s b` and residual `g = (b − a)/dt − b(x)`.
fn residual_at(model: &Model, a: &[f64], b: &[f64], s: f64, dt: f64, x: &mut [f64], g: &mut [f64]) {
    for k in 0..x.len() {
        x[k] = (1.0 - s) * a[k] + s * b[k];
    }
    model.drift_into(x, g);
    for k in 0..x.len() {
        g[k] = (b[k] - a[k]) / dt - g[k];
    }
}

/// Hard pinning of the initial point: zero initial cost.
pub fn pinned(_: &[f64]) -> f64 {
    0.0
}

/// Action (without initial cost) of the flat node array and its gradient with
/// respect to every node.
pub fn action_and_gradient(nodes: &[f64], len: usize, dt: f64, model: &Model) -> Result<(f64, Vec<f64>)> {
    let count = nodes.len() / len;
    let mut grad = vec![0.0; nodes.len()];
    let mut total = 0.0;
    let mut x = vec![0.0; len];
    let mut g = vec![0.0; len];
    for i in 0..count - 1 {
        let a = &nodes[i * len..(i + 1) * len];
        let b = &nodes[(i + 1) * len..(i + 2) * len];
        for &(s, w) in &GAUSS {
            residual_at(model, a, b, s, dt, &mut x, &mut g);
            let (energy, grad_g, grad_x) = model.residual_energy(&x, &g)?;
            let c = 0.5 * dt * w;
            total += c * energy;
            // ∂x/∂a = 1 − s, ∂x/∂b = s, ∂g/∂a = −1/dt − (1−s)Db, ∂g/∂b = 1/dt − s Db
            let jt = model.drift_vjp(&x, &grad_g);
            for k in 0..len {
                let mut through_x = -jt[k];
                if let Some(gx) = &grad_x {
                    through_x += gx[k];
                }
                grad[i * len + k] += c * ((1.0 - s) * through_x - grad_g[k] / dt);
                grad[(i + 1) * len + k] += c * (s * through_x + grad_g[k] / dt);
            }
        }
    }
    Ok((total, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Stop when `‖∇‖/√dt` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Precondition with the exact Hessian of the diagonal linear part.
    pub precondition: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50_000, precondition: true }
    }
}

/// Per-mode tridiagonal Hessian of the action of the linear part `−λ_k x_k`
/// over the free nodes. With linear elements, `½∫(ẋ + λx)²` contributes
/// `2/dt + 2λ²dt/3` on the diagonal and `−1/dt + λ²dt/6` off it; a free
/// terminal node belongs to one interval only and gets half the diagonal.
struct Preconditioner {
    vars: usize,
    len: usize,
    diag: Vec<f64>,
    end_diag: Vec<f64>,
    off: Vec<f64>,
}

impl Preconditioner {
    fn new(model: &Model, vars: usize, dt: f64, enabled: bool, free_end: bool) -> Self {
        let len = model.state_len();
        let (diag, off): (Vec<f64>, Vec<f64>) = if enabled {
            model
                .linear_rates()
                .iter()
                .map(|l| (2.0 / dt + 2.0 * l * l * dt / 3.0, -1.0 / dt + l * l * dt / 6.0))
                .unzip()
        } else {
            (vec![1.0; len], vec![0.0; len])
        };
        let end_diag = if free_end && enabled { diag.iter().map(|d| 0.5 * d).collect() } else { diag.clone() };
        Self { vars, len, diag, end_diag, off }
    }

    fn diag_at(&self, j: usize, k: usize) -> f64 {
        if j + 1 == self.vars {
            self.end_diag[k]
        } else {
            self.diag[k]
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (n, len) = (self.vars, self.len);
        let mut out = vec![0.0; v.len()];
        for k in 0..len {
            for j in 0..n {
                let mut s = self.diag_at(j, k) * v[j * len + k];
                if j > 0 {
                    s += self.off[k] * v[(j - 1) * len + k];
                }
                if j + 1 < n {
                    s += self.off[k] * v[(j + 1) * len + k];
                }
                out[j * len + k] = s;
            }
        }
        out
    }

    /// Thomas algorithm, one tridiagonal system per mode.
    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let (n, len) = (self.vars, self.len);
        let mut out = vec![0.0; r.len()];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for k in 0..len {
            let o = self.off[k];
            let a0 = self.diag_at(0, k);
            c[0] = o / a0;
            d[0] = r[k] / a0;
            for j in 1..n {
                let den = self.diag_at(j, k) - o * c[j - 1];
                c[j] = o / den;
                d[j] = (r[j * len + k] - o * d[j - 1]) / den;
            }
            out[(n - 1) * len + k] = d[n - 1];
            for j in (0..n - 1).rev() {
                out[j * len + k] = d[j] - c[j] * out[(j + 1) * len + k];
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Terminal reward `r(x_N)` with its gradient.
pub(crate) type Reward<'a> = &'a dyn Fn(&[f64]) -> (f64, Vec<f64>);

pub(crate) struct Optimized {
    pub nodes: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Minimizes `action(nodes) − reward(x_N)` over all nodes but the first (and
/// the last too unless a reward is given), by preconditioned Barzilai–Borwein
/// steps with a nonmonotone Armijo backtracking.
pub(crate) fn optimize_path(
    mut nodes: Vec<f64>,
    len: usize,
    dt: f64,
    model: &Model,
    opts: &MinimizeOptions,
    reward: Option<Reward<'_>>,
) -> Result<Optimized> {
    let slices = nodes.len() / len - 1;
    let free_end = reward.is_some();
    let vars = if free_end { slices } else { slices - 1 };
    let range = len..(1 + vars) * len;
    let pre = Preconditioner::new(model, vars, dt, opts.precondition, free_end);
    let scale = dt.sqrt();

    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (mut f, mut g) = action_and_gradient(x, len, dt, model)?;
        if let Some(r) = reward {
            let (value, grad) = r(&x[slices * len..]);
            f -= value;
            g[slices * len..].iter_mut().zip(grad).for_each(|(a, b)| *a -= b);
        }
        Ok((f, g[range.clone()].to_vec()))
    };

    let (mut f, mut g) = objective(&nodes)?;
    let mut z = pre.solve(&g);
    let mut step = 1.0;
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = dot(&g, &g).sqrt() / scale <= opts.tol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let reference = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let descent = dot(&g, &z);
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = nodes.clone();
            trial[range.clone()].iter_mut().zip(&z).for_each(|(x, d)| *x -= alpha * d);
            let (ft, gt) = objective(&trial)?;
            if ft.is_finite() && ft <= reference - 1e-4 * alpha * descent {
                accepted = Some((trial, ft, gt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, ft, g_new)) = accepted else { break };
        let s: Vec<f64> = trial[range.clone()].iter().zip(&nodes[range.clone()]).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { (dot(&s, &pre.apply(&s)) / sy).clamp(1e-10, 1e10) } else { 1.0 };
        nodes = trial;
        f = ft;
        g = g_new;
        z = pre.solve(&g);
        history.push(f);
        if history.len() > 10 {
            history.remove(0);
        }
        converged = dot(&g, &g).sqrt() / scale <= opts.tol;
    }
    let grad_norm = dot(&g, &g).sqrt() / scale;
    Ok(Optimized { nodes, converged, iterations, grad_norm })
}

/// Minimizes the pinned-endpoint action over `slices` time intervals, starting
/// from linear interpolation or from `warm_start` when given.
pub fn minimize_action(
    x0: &[f64],
    x1: &[f64],
    horizon: f64,
    model: &Model,
    slices: usize,
    opts: &MinimizeOptions,
    warm_start: Option<&Path>,
) -> Result<(Path, ActionReport)> {
    let len = model.state_len();
    for x in [x0, x1] {
        if x.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: x.len() });
        }
    }
    if slices < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 time slices, got {slices}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let dt = horizon / slices as f64;
    let mut nodes = match warm_start {
        Some(p) if p.len() == slices + 1 && p.state_len() == len => p.data().to_vec(),
        Some(_) => return Err(Error::InvalidArgument("warm start has the wrong shape".into())),
        None => (0..=slices)
            .flat_map(|i| {
                let s = i as f64 / slices as f64;
                x0.iter().zip(x1).map(move |(a, b)| (1.0 - s) * a + s * b)
            })
            .collect(),
    };
    nodes[..len].copy_from_slice(x0);
    nodes[slices * len..].copy_from_slice(x1);

    let out = optimize_path(nodes, len, dt, model, opts, None)?;
    let times = (0..=slices).map(|i| i as f64 * dt).collect();
    let path = Path::new(times, len, out.nodes)?;
    let mut report = action(&path, model, pinned)?;
    report.converged = out.converged;
    report.iterations = out.iterations;
    report.grad_norm = out.grad_norm;
    Ok((path, report))
}

/// Compares directional derivatives of the analytic gradient with central
/// differences at `samples` random perturbations of `path`. Returns the
/// largest relative discrepancy.
pub fn gradient_check(path: &Path, model: &Model, samples: usize, amplitude: f64, seed: u64) -> Result<f64> {
    check_model(path, model)?;
    let dt = uniform_dt(path)?;
    let len = path.state_len();
    let inner = len..(path.len() - 1) * len;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut base = path.data().to_vec();
        for v in &mut base[inner.clone()] {
            *v += amplitude * rng.random_range(-1.0..1.0);
        }
        let mut dir = vec![0.0; base.len()];
        for v in &mut dir[inner.clone()] {
            *v = rng.random_range(-1.0..1.0);
        }
        let norm = dot(&dir, &dir).sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let (_, grad) = action_and_gradient(&base, len, dt, model)?;
        let analytic = dot(&grad, &dir);
        let h = 1e-5;
        let shifted = |s: f64| -> Result<f64> {
            let p: Vec<f64> = base.iter().zip(&dir).map(|(a, d)| a + s * d).collect();
            Ok(action_and_gradient(&p, len, dt, model)?.0)
        };
        // fourth-order central difference
        let fd = (-shifted(2.0 * h)? + 8.0 * shifted(h)? - 8.0 * shifted(-h)? + shifted(-2.0 * h)?) / (12.0 * h);
        let den = analytic.abs().max(fd.abs()).max(1e-300);
        worst = worst.max((analytic - fd).abs() / den);
    }
    Ok(worst)
}
