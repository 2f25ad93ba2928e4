//! The logarithmic generator `H_n f = (1/n) e^{−nf} A_n e^{nf}` on explicit
//! test functions, the free energy, and exponential containment experiments.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{scaling_check, Family, Model, PotentialSpec};
use crate::simulator::{ensemble_count, SimConfig};
use crate::spectral::{SpectralField, Transform};

/// Cells with fewer hits than this are censored in slope fits.
pub const MIN_FIT_COUNT: usize = 5;

/// `E(x) = ½‖∇x‖² + ∫V(x) dθ` with the potential integrated by grid quadrature
/// on the default collocation grid of the field's truncation.
pub fn free_energy(x: &SpectralField, potential: &PotentialSpec) -> Result<f64> {
    let tr = Transform::with_default_grid(x.dim(), x.m())?;
    let lap = x.laplacian();
    Ok(energy_with(&tr, x.coeffs(), lap.coeffs(), potential))
}

fn energy_with(tr: &Transform, x: &[f64], lap_x: &[f64], potential: &PotentialSpec) -> f64 {
    // `laplacian()` returns the coefficients of Δx, so ½‖∇x‖² = −½⟨x, Δx⟩
    let grad: f64 = -0.5 * x.iter().zip(lap_x).map(|(a, b)| a * b).sum::<f64>();
    let vals: Vec<f64> = tr.to_grid_values(x).into_iter().map(|r| potential.v(r)).collect();
    grad + tr.integrate(&vals)
}

/// Free energy of a state vector of a spectral model with a potential.
pub fn model_free_energy(model: &Model, x: &[f64]) -> Result<f64> {
    let (tr, lap, pot) = energy_parts(model)?;
    if x.len() != lap.len() {
        return Err(Error::DimensionMismatch { expected: lap.len(), got: x.len() });
    }
    Ok(energy_fast(tr, lap, pot, x))
}

fn energy_parts(model: &Model) -> Result<(&Transform, &[f64], &PotentialSpec)> {
    match (model.transform(), model.laplacian_eigenvalues(), model.potential()) {
        (Some(t), Some(l), Some(p)) => Ok((t, l, p)),
        _ => Err(Error::Unsupported { family: model.family().name(), what: "free energy".into() }),
    }
}

fn energy_fast(tr: &Transform, lap: &[f64], pot: &PotentialSpec, x: &[f64]) -> f64 {
    let grad: f64 = 0.5 * x.iter().zip(lap).map(|(c, l)| l * c * c).sum::<f64>();
    let vals: Vec<f64> = tr.to_grid_values(x).into_iter().map(|r| pot.v(r)).collect();
    grad + tr.integrate(&vals)
}

/// `DE(x) = (−Δ)x + P V'(x)`.
fn energy_gradient(model: &Model, x: &[f64]) -> Result<Vec<f64>> {
    let (tr, lap, pot) = energy_parts(model)?;
    let mut vals = tr.to_grid_values(x);
    vals.iter_mut().for_each(|r| *r = pot.dv(*r));
    let pv = tr.to_spectral_values(&vals);
    Ok(x.iter().zip(lap).zip(pv).map(|((c, l), p)| l * c + p).collect())
}

/// Test functions with analytic gradient and Hessian action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadialTestFn {
    Constant { value: f64 },
    /// `½μ‖x − ξ‖²`.
    Quadratic { mu: f64, center: Vec<f64> },
    /// `log(1 + E(x)/M²)` for the free energy `E` of the model.
    LogFreeEnergy { scale: f64 },
    /// `inner + constant`.
    Shifted { inner: Box<RadialTestFn>, constant: f64 },
}

impl RadialTestFn {
    pub fn quadratic(mu: f64, center: Vec<f64>) -> Self {
        RadialTestFn::Quadratic { mu, center }
    }

    /// The log-free-energy function with `M = sup|σ|` of the model.
    pub fn log_free_energy(model: &Model) -> Self {
        RadialTestFn::LogFreeEnergy { scale: model.sigma_sup() }
    }

    pub fn shifted(self, constant: f64) -> Self {
        RadialTestFn::Shifted { inner: Box::new(self), constant }
    }

    fn check(&self, model: &Model, x: &[f64]) -> Result<()> {
        if x.len() != model.state_len() {
            return Err(Error::DimensionMismatch { expected: model.state_len(), got: x.len() });
        }
        match self {
            RadialTestFn::Quadratic { center, .. } if center.len() != x.len() => {
                Err(Error::DimensionMismatch { expected: x.len(), got: center.len() })
            }
            RadialTestFn::LogFreeEnergy { scale } if !(*scale > 0.0) => {
                Err(Error::InvalidArgument(format!("scale M must be positive, got {scale}")))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, model: &Model, x: &[f64]) -> Result<f64> {
        self.check(model, x)?;
        Ok(match self {
            RadialTestFn::Constant { value } => *value,
            RadialTestFn::Quadratic { mu, center } => {
                0.5 * mu * x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            }
            RadialTestFn::LogFreeEnergy { scale } => (model_free_energy(model, x)? / (scale * scale)).ln_1p(),
            RadialTestFn::Shifted { inner, constant } => inner.value(model, x)? + constant,
        })
    }

    pub fn gradient(&self, model: &Model, x: &[f64]) -> Result<Vec<f64>> {
        self.check(model, x)?;
        Ok(match self {
            RadialTestFn::Constant { .. } => vec![0.0; x.len()],
            RadialTestFn::Quadratic { mu, center } => x.iter().zip(center).map(|(a, b)| mu * (a - b)).collect(),
            RadialTestFn::LogFreeEnergy { scale } => {
                let denom = scale * scale + model_free_energy(model, x)?;
                energy_gradient(model, x)?.into_iter().map(|g| g / denom).collect()
            }
            RadialTestFn::Shifted { inner, .. } => inner.gradient(model, x)?,
        })
    }

    /// `D²f(x) v`.
    pub fn hessian_apply(&self, model: &Model, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check(model, x)?;
        if v.len() != x.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: v.len() });
        }
        Ok(match self {
            RadialTestFn::Constant { .. } => vec![0.0; x.len()],
            RadialTestFn::Quadratic { mu, .. } => v.iter().map(|a| mu * a).collect(),
            RadialTestFn::LogFreeEnergy { scale } => {
                let denom = scale * scale + model_free_energy(model, x)?;
                let de = energy_gradient(model, x)?;
                let lap = model.laplacian_eigenvalues().expect("checked by the energy");
                let pv = model.potential_hessian_apply(x, v)?;
                let proj: f64 = de.iter().zip(v).map(|(a, b)| a * b).sum();
                (0..x.len())
                    .map(|i| (lap[i] * v[i] + pv[i]) / denom - de[i] * proj / (denom * denom))
                    .collect()
            }
            RadialTestFn::Shifted { inner, .. } => inner.hessian_apply(model, x, v)?,
        })
    }

    /// Largest relative mismatch of the analytic gradient and Hessian action
    /// against centered differences with step `h`, along `directions` random
    /// unit directions.
    pub fn derivative_check(&self, model: &Model, x: &[f64], directions: usize, h: f64, seed: u64) -> Result<f64> {
        let g = self.gradient(model, x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..directions {
            let mut v: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            let at = |s: f64| -> Vec<f64> { x.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
            let fp = self.value(model, &at(h))?;
            let fm = self.value(model, &at(-h))?;
            let dir_fd = (fp - fm) / (2.0 * h);
            let dir = g.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            worst = worst.max((dir - dir_fd).abs() / dir.abs().max(1.0));
            let gp = self.gradient(model, &at(h))?;
            let gm = self.gradient(model, &at(-h))?;
            let hv = self.hessian_apply(model, x, &v)?;
            let scale = hv.iter().map(|a| a.abs()).fold(1.0, f64::max);
            for i in 0..x.len() {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                worst = worst.max((hv[i] - fd).abs() / scale);
            }
        }
        Ok(worst)
    }
}

/// `H_n f(x)` split into its drift pairing, squared adjoint-diffusion gradient
/// and Hessian trace terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorValue {
    pub total: f64,
    /// `⟨Df, b(x)⟩`
    pub drift: f64,
    /// `½‖B*(x) Df‖²`
    pub gradient: f64,
    /// `(1/2n) Σ_k ⟨D²f B e_k, B e_k⟩`
    pub trace: f64,
}

/// Evaluates the logarithmic generator exactly in the truncated coordinates.
pub fn transformed_generator(f: &RadialTestFn, x: &[f64], model: &Model) -> Result<GeneratorValue> {
    let df = f.gradient(model, x)?;
    let b = model.drift(x)?;
    let drift: f64 = df.iter().zip(&b).map(|(a, c)| a * c).sum();
    let bdf = model.diffusion_adjoint_apply(x, &df)?;
    let gradient = 0.5 * bdf.iter().map(|a| a * a).sum::<f64>();
    let len = model.noise_len();
    let mut e = vec![0.0; len];
    let mut tr = 0.0;
    for k in 0..len {
        e[k] = 1.0;
        let be = model.diffusion_apply(x, &e)?;
        let hbe = f.hessian_apply(model, x, &be)?;
        tr += hbe.iter().zip(&be).map(|(a, c)| a * c).sum::<f64>();
        e[k] = 0.0;
    }
    let trace = tr / (2.0 * model.n());
    Ok(GeneratorValue { total: drift + gradient + trace, drift, gradient, trace })
}

/// `4^d π^{2d} (1+m)^{4d} / (6n) + (m^{3d}/n) sup|V''|`.
pub fn lyapunov_bound(dim: usize, m: usize, n: f64, sup_d2: f64) -> f64 {
    let d = dim as i32;
    let m = m as f64;
    4f64.powi(d) * PI.powi(2 * d) * (1.0 + m).powi(4 * d) / (6.0 * n) + m.powi(3 * d) / n * sup_d2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCheck {
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
    pub components: GeneratorValue,
}

/// Checks `H_n f(x) ≤ bound + tol` for the log-free-energy function of an
/// Allen–Cahn model with `M = sup|σ|`.
pub fn lyapunov_bound_check(x: &[f64], model: &Model, tol: f64) -> Result<LyapunovCheck> {
    if model.family() != Family::AllenCahn {
        return Err(Error::Unsupported { family: model.family().name(), what: "Lyapunov bound".into() });
    }
    let (dim, m) = model.spectral_shape().expect("Allen–Cahn is spectral");
    let pot = model.potential().expect("Allen–Cahn has a potential");
    let f = RadialTestFn::log_free_energy(model);
    let components = transformed_generator(&f, x, model)?;
    let bound = lyapunov_bound(dim, m, model.n(), pot.sup_d2());
    Ok(LyapunovCheck { value: components.total, bound, pass: components.total <= bound + tol, components })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSuite {
    pub checked: usize,
    pub failures: usize,
    /// Largest `value − bound`.
    pub max_excess: f64,
    /// State attaining `max_excess` when some check fails.
    pub witness: Option<Vec<f64>>,
}

/// Random truncated fields: coefficient `j` uniform in `±amplitude/(1 + √λ_j)`,
/// so the gradient norm stays comparable across modes.
pub fn random_fields(model: &Model, count: usize, amplitude: f64, seed: u64) -> Vec<Vec<f64>> {
    let len = model.state_len();
    let lap = model.laplacian_eigenvalues().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| lap.iter().map(|l| rng.random_range(-1.0..=1.0) * amplitude / (1.0 + l.sqrt())).collect())
        .collect()
}

/// [`lyapunov_bound_check`] over [`random_fields`].
pub fn lyapunov_suite(model: &Model, count: usize, amplitude: f64, seed: u64, tol: f64) -> Result<LyapunovSuite> {
    let mut out = LyapunovSuite { checked: 0, failures: 0, max_excess: f64::NEG_INFINITY, witness: None };
    let mut worst = None;
    for x in random_fields(model, count, amplitude, seed) {
        let c = lyapunov_bound_check(&x, model, tol)?;
        out.checked += 1;
        out.failures += usize::from(!c.pass);
        if c.value - c.bound > out.max_excess {
            out.max_excess = c.value - c.bound;
            worst = Some(x);
        }
    }
    if out.failures > 0 {
        out.witness = worst;
    }
    Ok(out)
}

/// `(‖x − ∫x‖, ‖∇x‖/(2π))`: both sides of the Poincaré inequality on the unit torus.
pub fn poincare_check(x: &SpectralField) -> (f64, f64) {
    let c = x.coeffs();
    let lap = crate::spectral::laplacian_rates(x.dim(), x.m());
    // the constant mode is first in coefficient order
    let lhs = c[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
    let grad = c.iter().zip(&lap).map(|(a, l)| l * a * a).sum::<f64>().sqrt();
    (lhs, grad / (2.0 * PI))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentConfig {
    /// Free-energy level the paths must exceed.
    pub level: f64,
    /// Level the initial state must not exceed.
    pub initial_level: f64,
    pub noise_scales: Vec<f64>,
    pub sim: SimConfig,
    /// Budget passed to the mode-count scaling check.
    pub scaling_budget: f64,
}

/// Monte Carlo frequency of a rare event at one noise scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCell {
    pub n: f64,
    /// Members that completed.
    pub trials: usize,
    pub hits: usize,
    pub aborted: usize,
    pub frequency: f64,
    /// Fewer than [`MIN_FIT_COUNT`] hits, so the cell stays out of the fit;
    /// `frequency` is then the upper bound `max(hits, 1)/trials`.
    pub censored: bool,
}

impl FrequencyCell {
    pub fn new(n: f64, hits: usize, aborted: usize, members: usize) -> Self {
        let trials = members - aborted;
        let censored = hits < MIN_FIT_COUNT;
        let frequency = hits.max(usize::from(censored)) as f64 / trials.max(1) as f64;
        Self { n, trials, hits, aborted, frequency, censored }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub initial_energy: f64,
    pub cells: Vec<FrequencyCell>,
    /// Least-squares slope of `log frequency` against `n` over uncensored cells.
    pub slope: Option<f64>,
    /// Standard error of the slope from binomial variances of the log-frequencies.
    pub slope_stderr: Option<f64>,
}

/// Fraction of paths whose free energy exceeds `cfg.level` at some recorded
/// step, for each noise scale, and the exponential slope in `n`.
pub fn containment_experiment(model: &Model, x0: &[f64], cfg: &ContainmentConfig) -> Result<ContainmentReport> {
    let (dim, m) = model.spectral_shape().ok_or(Error::Unsupported {
        family: model.family().name(),
        what: "containment experiment".into(),
    })?;
    let initial_energy = model_free_energy(model, x0)?;
    if initial_energy > cfg.initial_level {
        return Err(Error::InvalidArgument(format!(
            "E(x0) = {initial_energy} exceeds the initial level {}",
            cfg.initial_level
        )));
    }
    let mut cells = Vec::with_capacity(cfg.noise_scales.len());
    for &n in &cfg.noise_scales {
        let report = scaling_check(model.family(), dim, m, n, cfg.scaling_budget);
        if !report.pass {
            return Err(Error::Condition {
                condition: "mode-count scaling".into(),
                detail: format!("n = {n}: ratio {} exceeds budget {}", report.ratio, cfg.scaling_budget),
            });
        }
        let mn = Model::new(model.spec().with_noise_scale(n))?;
        let (tr, lap, pot) = energy_parts(&mn)?;
        let level = cfg.level;
        let every = cfg.sim.record_every;
        let count = ensemble_count(x0, &mn, &cfg.sim, |k, x| k % every == 0 && energy_fast(tr, lap, pot, x) > level)?;
        cells.push(FrequencyCell::new(n, count.hits, count.aborted, count.members));
    }
    let (slope, slope_stderr) = fit_log_slope(&cells);
    Ok(ContainmentReport { initial_energy, cells, slope, slope_stderr })
}

/// Weighted least squares of `log p̂` against `n` over the uncensored cells,
/// with weights `k/(1 − p̂)`. Returns the slope and its standard error.
pub fn fit_log_slope(cells: &[FrequencyCell]) -> (Option<f64>, Option<f64>) {
    let pts: Vec<(f64, f64, f64)> = cells
        .iter()
        .filter(|c| !c.censored)
        .map(|c| (c.n, c.frequency.ln(), c.hits as f64 / (1.0 - c.frequency).max(1e-12)))
        .collect();
    if pts.len() < 2 {
        return (None, None);
    }
    let w: f64 = pts.iter().map(|p| p.2).sum();
    let nbar = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
    let ybar = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - nbar).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - nbar) * (p.1 - ybar)).sum();
    if sxx == 0.0 {
        return (None, None);
    }
    (Some(sxy / sxx), Some(sxx.recip().sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelSpec, NoiseProfile, NoiseSpec};
    use crate::simulator::simulate_path;
    use crate::spectral::BasisIndex;

    fn ac(m: usize, n: f64) -> Model {
        Model::new(ModelSpec::AllenCahn { dim: 1, m, n, potential: PotentialSpec::default(), noise: NoiseSpec::Additive })
            .unwrap()
    }

    fn ac_multiplicative(m: usize, n: f64) -> Model {
        let probe = SpectralField::mode(1, 2, &BasisIndex::new(vec![2]).unwrap(), 1.0).unwrap();
        let noise = NoiseSpec::Multiplicative {
            probes: vec![probe],
            profile: NoiseProfile::Modulated { base: 1.0, amplitude: 0.4 },
        };
        Model::new(ModelSpec::AllenCahn { dim: 1, m, n, potential: PotentialSpec::default(), noise }).unwrap()
    }

    #[test]
    fn free_energy_examples() {
        let quad = PotentialSpec::Quadratic { curvature: 1.0, offset: 0.7 };
        let zero = SpectralField::zeros(1, 4).unwrap();
        assert!((free_energy(&zero, &quad).unwrap() - 0.7).abs() < 1e-14);
        let flat = PotentialSpec::Quadratic { curvature: 0.0, offset: 0.0 };
        let x = SpectralField::mode(1, 4, &BasisIndex::new(vec![2]).unwrap(), 0.3).unwrap();
        let e = free_energy(&x, &flat).unwrap();
        assert!((e - 0.5 * 4.0 * PI * PI * 0.09).abs() < 1e-12);
    }

    #[test]
    fn model_energy_matches_field_energy() {
        let model = ac(5, 10.0);
        for x in random_fields(&model, 10, 1.0, 3) {
            let a = model_free_energy(&model, &x).unwrap();
            let b = free_energy(&model.field(x).unwrap(), &PotentialSpec::default()).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn derivatives_match_differences() {
        for model in [ac(4, 50.0), ac_multiplicative(4, 50.0)] {
            let f = RadialTestFn::log_free_energy(&model);
            for (i, x) in random_fields(&model, 5, 1.5, 7).iter().enumerate() {
                let err = f.derivative_check(&model, x, 3, 1e-5, i as u64).unwrap();
                assert!(err < 1e-6, "{err}");
            }
        }
    }

    #[test]
    fn constant_function_has_zero_generator() {
        let model = ac(4, 10.0);
        let x = random_fields(&model, 1, 1.0, 1).remove(0);
        let g = transformed_generator(&RadialTestFn::Constant { value: 3.0 }, &x, &model).unwrap();
        assert_eq!(g.total, 0.0);
    }

    #[test]
    fn ou_quadratic_closed_form() {
        let (mu, n) = (1.7, 8.0);
        let model = Model::new(ModelSpec::ornstein_uhlenbeck(n)).unwrap();
        let f = RadialTestFn::quadratic(mu, vec![0.0]);
        for x in [-1.2, 0.0, 0.4, 2.0] {
            let g = transformed_generator(&f, &[x], &model).unwrap();
            let want = -mu * x * x + 0.5 * mu * mu * x * x + mu / (2.0 * n);
            assert!((g.total - want).abs() < 1e-13);
        }
    }

    #[test]
    fn trace_term_halves_when_n_doubles() {
        let x = random_fields(&ac(4, 1.0), 1, 1.0, 2).remove(0);
        let a = ac_multiplicative(4, 64.0);
        let b = ac_multiplicative(4, 128.0);
        let f = RadialTestFn::log_free_energy(&a);
        let ga = transformed_generator(&f, &x, &a).unwrap();
        let gb = transformed_generator(&f, &x, &b).unwrap();
        assert_eq!(ga.trace, 2.0 * gb.trace);
        assert_eq!(ga.drift, gb.drift);
    }

    #[test]
    fn lyapunov_bound_holds_on_random_fields() {
        let model = ac(4, 512.0);
        let suite = lyapunov_suite(&model, 200, 3.0, 11, 1e-8).unwrap();
        assert_eq!(suite.failures, 0, "{suite:?}");
        let zero = lyapunov_bound_check(&[0.0; 4], &model, 1e-8).unwrap();
        assert!(zero.components.drift.abs() < 1e-15 && zero.components.gradient.abs() < 1e-15);
        assert!(zero.value <= zero.components.trace + 1e-15);
        assert!(lyapunov_bound(1, 4, 1024.0, 3.0) < lyapunov_bound(1, 4, 512.0, 3.0));
    }

    #[test]
    fn poincare_examples() {
        let c = SpectralField::constant(1, 4, 2.5).unwrap();
        assert_eq!(poincare_check(&c), (0.0, 0.0));
        let e2 = SpectralField::mode(1, 4, &BasisIndex::new(vec![2]).unwrap(), 1.0).unwrap();
        let (l, r) = poincare_check(&e2);
        assert!((l - 1.0).abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_flow_dissipates_energy() {
        let model = ac(4, 100.0);
        let x0 = vec![0.2, 0.5, -0.3, 0.1];
        let dt = 1e-4;
        let path = simulate_path(&x0, &model, &SimConfig::new(dt, 0.2).deterministic()).unwrap();
        let e: Vec<f64> = path.states().map(|x| model_free_energy(&model, x).unwrap()).collect();
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + dt * 1e-6, "{} -> {}", w[0], w[1]);
        }
        assert!(e.last().unwrap() < &e[0]);
    }

    #[test]
    fn containment_noise_off_never_exceeds() {
        let model = ac(4, 64.0);
        let x0 = vec![0.0, 0.1, 0.0, 0.0];
        let e0 = model_free_energy(&model, &x0).unwrap();
        let cfg = ContainmentConfig {
            level: e0 + 1e-9,
            initial_level: e0,
            noise_scales: vec![64.0, 128.0],
            sim: SimConfig::new(1e-3, 0.2).with_ensemble(4).deterministic(),
            scaling_budget: 4.0,
        };
        let r = containment_experiment(&model, &x0, &cfg).unwrap();
        assert!(r.cells.iter().all(|c| c.hits == 0 && c.censored));
        assert_eq!(r.slope, None);
    }

    #[test]
    fn containment_levels_are_nested() {
        let model = ac(4, 64.0);
        let x0 = vec![0.0; 4];
        let base = ContainmentConfig {
            level: 0.0,
            initial_level: 1.0,
            noise_scales: vec![64.0],
            sim: SimConfig::new(1e-3, 0.1).with_ensemble(200).with_seed(5),
            scaling_budget: 4.0,
        };
        let mut prev = usize::MAX;
        for level in [0.3, 0.4, 0.6, 1.0] {
            let r = containment_experiment(&model, &x0, &ContainmentConfig { level, ..base.clone() }).unwrap();
            assert!(r.cells[0].hits <= prev);
            prev = r.cells[0].hits;
        }
    }

    #[test]
    fn slope_fit_recovers_exponential() {
        let cells: Vec<FrequencyCell> = [(1.0, 0.5), (2.0, 0.25), (3.0, 0.125)]
            .iter()
            .map(|&(n, p)| FrequencyCell::new(n, (p * 1000.0) as usize, 0, 1000))
            .collect();
        let (s, se) = fit_log_slope(&cells);
        assert!((s.unwrap() + 2f64.ln()).abs() < 1e-12);
        assert!(se.unwrap() > 0.0);
    }
}
