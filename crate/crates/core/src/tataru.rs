//! The semigroup-adapted distance `d_C(x, y) = inf_t {t + ‖x − S(t)y‖}`, its
//! smoothed versions, and property suites for their quantitative bounds.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Violations below this count as passing in the property suites.
pub const SUITE_TOL: f64 = 1e-8;

/// Points of the coarse scan preceding golden-section refinement.
const SCAN_POINTS: usize = 256;
const T_TOL: f64 = 1e-10;

/// Gauss–Legendre nodes and weights on `[−1, 1]`, 8 points.
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

type MapFn = dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync;

/// A contraction semigroup `S(t)` on `R^len`.
#[derive(Clone)]
pub enum SemigroupHandle {
    /// Per-coordinate decay `e^{−λ_k t}` with `λ_k ≥ 0`.
    SpectralLinear { rates: Vec<f64> },
    /// `e^{tA}` for a matrix with nonpositive symmetric part.
    FiniteDimLinear { matrix: DMatrix<f64> },
    /// A user-supplied map `(t, y) ↦ S(t)y`; contraction is the caller's claim.
    ExplicitMap { len: usize, map: Arc<MapFn> },
}

impl fmt::Debug for SemigroupHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemigroupHandle::SpectralLinear { rates } => f.debug_struct("SpectralLinear").field("rates", rates).finish(),
            SemigroupHandle::FiniteDimLinear { matrix } => {
                f.debug_struct("FiniteDimLinear").field("matrix", matrix).finish()
            }
            SemigroupHandle::ExplicitMap { len, .. } => f.debug_struct("ExplicitMap").field("len", len).finish(),
        }
    }
}

impl SemigroupHandle {
    pub fn spectral(rates: Vec<f64>) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::InvalidArgument(format!("decay rates must be nonnegative, got {r}")));
        }
        Ok(SemigroupHandle::SpectralLinear { rates })
    }

    /// Scalar `S(t)y = e^{−t}y`.
    pub fn scalar_decay() -> Self {
        SemigroupHandle::SpectralLinear { rates: vec![1.0] }
    }

    /// Heat semigroup on the `m^d` retained modes.
    pub fn spectral_heat(dim: usize, m: usize) -> Self {
        SemigroupHandle::SpectralLinear { rates: crate::spectral::laplacian_rates(dim, m) }
    }

    pub fn identity(len: usize) -> Self {
        SemigroupHandle::SpectralLinear { rates: vec![0.0; len] }
    }

    /// Rejects matrices whose symmetric part has a positive eigenvalue.
    pub fn finite_dim(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("matrix must be square and nonempty".into()));
        }
        let a = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        let sym = (&a + a.transpose()) * 0.5;
        let top = sym.symmetric_eigenvalues().max();
        if top > 1e-12 {
            return Err(Error::Condition {
                condition: "dissipativity".into(),
                detail: format!("symmetric part has eigenvalue {top} > 0"),
            });
        }
        Ok(SemigroupHandle::FiniteDimLinear { matrix: a })
    }

    pub fn explicit(len: usize, map: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        SemigroupHandle::ExplicitMap { len, map: Arc::new(map) }
    }

    pub fn len(&self) -> usize {
        match self {
            SemigroupHandle::SpectralLinear { rates } => rates.len(),
            SemigroupHandle::FiniteDimLinear { matrix } => matrix.nrows(),
            SemigroupHandle::ExplicitMap { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `S(t)y`.
    pub fn apply(&self, t: f64, y: &[f64]) -> Vec<f64> {
        match self {
            SemigroupHandle::SpectralLinear { rates } => {
                y.iter().zip(rates).map(|(v, l)| if *l == 0.0 { *v } else { v * (-l * t).exp() }).collect()
            }
            SemigroupHandle::FiniteDimLinear { matrix } => {
                let e = (matrix * t).exp();
                (e * DVector::from_column_slice(y)).as_slice().to_vec()
            }
            SemigroupHandle::ExplicitMap { map, .. } => map(t, y),
        }
    }

    fn check(&self, x: &[f64], y: &[f64]) -> Result<()> {
        for v in [x, y] {
            if v.len() != self.len() {
                return Err(Error::DimensionMismatch { expected: self.len(), got: v.len() });
            }
        }
        Ok(())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|p| p * p).sum::<f64>().sqrt()
}

/// Smoothing of `√r`: a quadratic on `[0, ε)` matched in value and slope at `ε`.
pub fn phi_eps(r: f64, eps: f64) -> Result<f64> {
    check_phi_args(r, eps)?;
    Ok(phi(r, eps))
}

fn check_phi_args(r: f64, eps: f64) -> Result<()> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("φ_ε needs r ≥ 0, got {r}")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
    }
    Ok(())
}

fn phi(r: f64, eps: f64) -> f64 {
    if r >= eps {
        r.sqrt()
    } else {
        let s = eps.sqrt();
        let d = r - eps;
        s + d / (2.0 * s) - d * d / (8.0 * eps * s)
    }
}

fn dphi(r: f64, eps: f64) -> f64 {
    if r >= eps {
        0.5 / r.sqrt()
    } else {
        let s = eps.sqrt();
        0.5 / s - (r - eps) / (4.0 * eps * s)
    }
}

pub fn phi_eps_prime(r: f64, eps: f64) -> Result<f64> {
    check_phi_args(r, eps)?;
    Ok(dphi(r, eps))
}

pub fn phi_eps_second(r: f64, eps: f64) -> Result<f64> {
    check_phi_args(r, eps)?;
    Ok(if r >= eps { -0.25 / (r * r.sqrt()) } else { -0.25 / (eps * eps.sqrt()) })
}

/// Value and argmin of a one-dimensional minimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub value: f64,
    pub t: f64,
}

/// Minimizes `g` on `[0, upper]` by a coarse scan then golden section around
/// the best scan point; `hints` are extra candidate times.
fn bracket_min(g: impl Fn(f64) -> f64, upper: f64, hints: &[f64]) -> Minimum {
    let mut best = Minimum { value: g(0.0), t: 0.0 };
    if upper > 0.0 {
        let h = upper / SCAN_POINTS as f64;
        let mut idx = 0;
        for i in 1..=SCAN_POINTS {
            let v = g(i as f64 * h);
            if v < best.value {
                best = Minimum { value: v, t: i as f64 * h };
                idx = i;
            }
        }
        let (mut a, mut b) = ((idx.max(1) - 1) as f64 * h, ((idx + 1).min(SCAN_POINTS)) as f64 * h);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
        let (mut gc, mut gd) = (g(c), g(d));
        while b - a > T_TOL {
            if gc < gd {
                b = d;
                d = c;
                gd = gc;
                c = b - r * (b - a);
                gc = g(c);
            } else {
                a = c;
                c = d;
                gc = gd;
                d = a + r * (b - a);
                gd = g(d);
            }
        }
        for (t, v) in [(c, gc), (d, gd)] {
            if v < best.value {
                best = Minimum { value: v, t };
            }
        }
    }
    for &t in hints.iter().filter(|t| **t >= 0.0) {
        let v = g(t);
        if v < best.value {
            best = Minimum { value: v, t };
        }
    }
    best
}

/// `d_C(x, y)` with its minimizing time. The objective at `t = 0` is `‖x − y‖`
/// and exceeds `t` everywhere, so the search runs over `[0, ‖x − y‖]`.
pub fn tataru_distance(x: &[f64], y: &[f64], s: &SemigroupHandle) -> Result<Minimum> {
    tataru_distance_with_hints(x, y, s, &[])
}

/// [`tataru_distance`] with extra candidate times evaluated after the search.
pub fn tataru_distance_with_hints(x: &[f64], y: &[f64], s: &SemigroupHandle, hints: &[f64]) -> Result<Minimum> {
    s.check(x, y)?;
    Ok(bracket_min(|t| t + dist(x, &s.apply(t, y)), dist(x, y), hints))
}

/// `h_ε(x) = inf_t {t + φ_ε(‖x − S(t)y‖²)}`.
pub fn h_eps(x: &[f64], y: &[f64], eps: f64, s: &SemigroupHandle) -> Result<Minimum> {
    s.check(x, y)?;
    check_phi_args(0.0, eps)?;
    let upper = dist(x, y) + eps.sqrt();
    Ok(bracket_min(|t| t + phi(dist(x, &s.apply(t, y)).powi(2), eps), upper, &[]))
}

/// `−(1/a) log ∫₀^∞ e^{−a(t + φ_ε(‖x − S(t)y‖²))} dt` and its gradient in `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftMin {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Truncation point of the time integral.
    pub horizon: f64,
    pub panels: usize,
}

/// Log-domain Gauss–Legendre evaluation of the soft minimum. The integrand is
/// at most `e^{−at}`, so truncating at `T* ≥ ‖x − y‖ + √ε + 40/a` leaves a tail
/// below `e^{−40}` of the integral. Panels are sized so that `a·width ≤ 2`, and
/// split where `φ_ε` switches branches.
pub fn h_n_eps(x: &[f64], y: &[f64], eps: f64, a_n: f64, s: &SemigroupHandle) -> Result<SoftMin> {
    s.check(x, y)?;
    check_phi_args(0.0, eps)?;
    if !(a_n > 1.0) {
        return Err(Error::InvalidArgument(format!("a_n must exceed 1, got {a_n}")));
    }
    // snapped to multiples of 1/a so the nodes do not move with x
    let horizon = ((dist(x, y) + eps.sqrt()) * a_n + 40.0).ceil() / a_n;
    let panels = ((a_n * horizon / 2.0).ceil() as usize).max(64);
    let width = horizon / panels as f64;
    let r2_at = |t: f64| dist(x, &s.apply(t, y)).powi(2);
    // φ_ε'' jumps where ‖x − S(t)y‖² crosses ε; panel edges are moved onto those times
    let mut edges = vec![0.0];
    let mut prev = r2_at(0.0) - eps;
    for p in 1..=panels {
        let (lo, hi) = ((p - 1) as f64 * width, p as f64 * width);
        let cur = r2_at(hi) - eps;
        if (prev < 0.0) != (cur < 0.0) {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..60 {
                let c = 0.5 * (a + b);
                if (r2_at(c) - eps < 0.0) == (prev < 0.0) {
                    a = c;
                } else {
                    b = c;
                }
            }
            edges.push(0.5 * (a + b));
        }
        edges.push(hi);
        prev = cur;
    }
    let mut logs = Vec::with_capacity(edges.len() * 8);
    let mut grads = Vec::with_capacity(edges.len() * 8);
    for e in edges.windows(2) {
        let (mid, half) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
        if half <= 0.0 {
            continue;
        }
        for (z, w) in GL8 {
            let t = mid + half * z;
            let st = s.apply(t, y);
            let diff: Vec<f64> = x.iter().zip(&st).map(|(a, b)| a - b).collect();
            let r2 = diff.iter().map(|d| d * d).sum::<f64>();
            logs.push((half * w).ln() - a_n * (t + phi(r2, eps)));
            let k = 2.0 * dphi(r2, eps);
            grads.push(diff.into_iter().map(|d| k * d).collect::<Vec<f64>>());
        }
    }
    let panels = edges.len() - 1;
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let value = -(top + total.ln()) / a_n;
    let mut gradient = vec![0.0; x.len()];
    for (w, g) in weights.iter().zip(&grads) {
        gradient.iter_mut().zip(g).for_each(|(o, gi)| *o += w / total * gi);
    }
    Ok(SoftMin { value, gradient, horizon, panels })
}

/// Difference quotients `(d_C(S(r)x, y) − d_C(x, y))/r` for each step `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalReport {
    pub quotients: Vec<(f64, f64)>,
    pub max_quotient: f64,
    pub pass: bool,
}

/// Checks the difference quotients of `d_C(·, y)` along the semigroup stay at
/// most 1. The minimizing time of `d_C(x, y)` shifted by `r` is offered as a
/// candidate for `d_C(S(r)x, y)`, so the computed upper bounds are consistent.
pub fn directional_bound_check(x: &[f64], y: &[f64], s: &SemigroupHandle, steps: &[f64]) -> Result<DirectionalReport> {
    if let Some(r) = steps.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::InvalidArgument(format!("steps must be positive, got {r}")));
    }
    let base = tataru_distance(x, y, s)?;
    let mut quotients = Vec::with_capacity(steps.len());
    for &r in steps {
        let moved = s.apply(r, x);
        let d = tataru_distance_with_hints(&moved, y, s, &[base.t + r])?;
        quotients.push((r, (d.value - base.value) / r));
    }
    let max_quotient = quotients.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(DirectionalReport { pass: max_quotient <= 1.0 + SUITE_TOL, quotients, max_quotient })
}

/// Outcome of one property suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub samples: usize,
    pub max_violation: f64,
    pub pass: bool,
}

impl SuiteReport {
    fn new(suite: &str, violations: impl IntoIterator<Item = f64>) -> Self {
        let (mut samples, mut max_violation) = (0, f64::NEG_INFINITY);
        for v in violations {
            samples += 1;
            max_violation = max_violation.max(v);
        }
        Self { suite: suite.into(), samples, max_violation, pass: max_violation <= SUITE_TOL }
    }
}

/// Parameters of [`tataru_suite`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub samples: usize,
    pub eps: f64,
    pub a_values: Vec<f64>,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { samples: 500, eps: 1e-2, a_values: vec![10.0, 100.0], amplitude: 2.0, seed: 0 }
    }
}

fn random_point(rng: &mut ChaCha8Rng, len: usize, amplitude: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-amplitude..=amplitude)).collect()
}

/// Bounds on `φ_ε`: violations of `0 ≤ rφ'_ε(r²) ≤ ½` on a dense `r` grid.
pub fn phi_bound_suite(eps_values: &[f64], points: usize) -> SuiteReport {
    let mut v = Vec::new();
    for &eps in eps_values {
        let top = 4.0 * eps.sqrt();
        for i in 0..=points {
            let r = top * i as f64 / points as f64;
            let q = r * dphi(r * r, eps);
            v.push((q - 0.5).max(-q));
        }
    }
    SuiteReport::new("phi-derivative-bound", v)
}

/// Every standing property of the distance and its smoothings over random
/// samples for the semigroup `s`.
pub fn tataru_suite(s: &SemigroupHandle, cfg: &SuiteConfig) -> Result<Vec<SuiteReport>> {
    let len = s.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pts = |k: usize| -> Vec<Vec<f64>> { (0..k).map(|_| random_point(&mut rng, len, cfg.amplitude)).collect() };
    let n = cfg.samples;
    let (xs, ys, xh, yh) = (pts(n), pts(n), pts(n), pts(n));
    let mut out = vec![phi_bound_suite(&[1e-1, 1e-2, 1e-3, cfg.eps], n.max(500))];

    let mut grad = Vec::with_capacity(n * cfg.a_values.len());
    for &a in &cfg.a_values {
        for (x, y) in xs.iter().zip(&ys) {
            grad.push(norm(&h_n_eps(x, y, cfg.eps, a, s)?.gradient) - 1.0);
        }
    }
    out.push(SuiteReport::new("soft-min-gradient-bound", grad));

    let mut lip = Vec::with_capacity(n);
    for i in 0..n {
        // perturbations of mixed size
        let scale = 10f64.powi(-((i % 4) as i32));
        let x2: Vec<f64> = xs[i].iter().zip(&xh[i]).map(|(a, b)| a + scale * b).collect();
        let y2: Vec<f64> = ys[i].iter().zip(&yh[i]).map(|(a, b)| a + scale * b).collect();
        let d1 = tataru_distance(&xs[i], &ys[i], s)?.value;
        let d2 = tataru_distance(&x2, &y2, s)?.value;
        lip.push((d1 - d2).abs() - dist(&xs[i], &x2) - dist(&ys[i], &y2));
    }
    out.push(SuiteReport::new("distance-lipschitz", lip));

    let steps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let mut dir = Vec::with_capacity(n);
    for (x, y) in xs.iter().zip(&ys) {
        dir.push(directional_bound_check(x, y, s, &steps)?.max_quotient - 1.0);
    }
    out.push(SuiteReport::new("directional-quotient", dir));

    let c = 2.0;
    let mut clamp = Vec::with_capacity(n * cfg.a_values.len());
    for &a in &cfg.a_values {
        for (x, y) in xh.iter().zip(&ys) {
            let nx = norm(x).max(1e-12);
            let target = norm(y) + c + rng.random_range(0.0..1.0);
            let xr: Vec<f64> = x.iter().map(|v| v * target / nx).collect();
            clamp.push(c - h_n_eps(&xr, y, cfg.eps, a, s)?.value);
        }
    }
    out.push(SuiteReport::new("soft-min-clamp", clamp));

    let gap = 0.375 * cfg.eps.sqrt();
    let mut unif = Vec::with_capacity(n);
    for (x, y) in xs.iter().zip(&ys) {
        let h = h_eps(x, y, cfg.eps, s)?.value;
        let d = tataru_distance(x, y, s)?.value;
        unif.push((h - d).abs() - gap);
    }
    out.push(SuiteReport::new("smoothing-gap", unif));
    Ok(out)
}

/// Contraction, `S(0) = I`, `S(t)0 = 0` and the semigroup law on random samples.
pub fn semigroup_checks(s: &SemigroupHandle, samples: usize, amplitude: f64, seed: u64) -> Vec<SuiteReport> {
    let len = s.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut contr, mut ident, mut zero, mut law) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..samples {
        let x = random_point(&mut rng, len, amplitude);
        let y = random_point(&mut rng, len, amplitude);
        let (t, u) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        contr.push(dist(&s.apply(t, &x), &s.apply(t, &y)) - dist(&x, &y));
        ident.push(dist(&s.apply(0.0, &x), &x));
        zero.push(norm(&s.apply(t, &vec![0.0; len])));
        law.push(dist(&s.apply(u, &s.apply(t, &x)), &s.apply(t + u, &x)));
    }
    vec![
        SuiteReport::new("semigroup-contraction", contr),
        SuiteReport::new("semigroup-identity", ident),
        SuiteReport::new("semigroup-fixes-zero", zero),
        SuiteReport::new("semigroup-law", law),
    ]
}
