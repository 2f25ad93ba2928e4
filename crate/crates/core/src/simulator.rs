//! Time integration under truncated cylindrical noise, with reproducible seeding.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::models::Model;

/// Frozen description of the random stream, recorded in every output.
pub const RNG_ALGORITHM: &str =
    "chacha8/rand_chacha-0.9; normals: ziggurat/rand_distr-0.5 StandardNormal; member seed: splitmix64(seed ^ splitmix64(index))";

/// Stability budget `dt·λ_max` for the explicit scheme.
pub const EXPLICIT_STABILITY_BUDGET: f64 = 2.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    EulerMaruyama,
    /// Exact exponential treatment of the diagonal linear part (ETD1).
    #[default]
    SemiImplicitLinear,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    /// Horizon `T`.
    pub horizon: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub ensemble: usize,
    /// Switch the noise off (the `n = ∞` flow).
    #[serde(default)]
    pub deterministic: bool,
    /// Keep every k-th state in the stored path.
    #[serde(default = "one")]
    pub record_every: usize,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self { dt, horizon, scheme: Scheme::default(), seed: 0, ensemble: 1, deterministic: false, record_every: 1 }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_ensemble(mut self, ensemble: usize) -> Self {
        self.ensemble = ensemble;
        self
    }

    pub fn deterministic(mut self) -> Self {
        self.deterministic = true;
        self
    }

    pub fn with_record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    /// Number of steps; `T` must be an integer multiple of `dt` up to 1e−9 relative.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.horizon >= self.dt) {
            return Err(Error::InvalidArgument(format!(
                "need dt > 0 and T >= dt (dt = {}, T = {})",
                self.dt, self.horizon
            )));
        }
        let ratio = self.horizon / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::InvalidArgument(format!("T = {} is not a multiple of dt = {}", self.horizon, self.dt)));
        }
        if self.record_every == 0 || !(n as usize).is_multiple_of(self.record_every) {
            return Err(Error::InvalidArgument(format!(
                "record_every = {} must divide the step count {}",
                self.record_every, n
            )));
        }
        Ok(n as usize)
    }

    /// Validates against `model`, returning warnings (explicit stability budget).
    pub fn validate(&self, model: &Model) -> Result<Vec<String>> {
        self.steps()?;
        let mut warnings = Vec::new();
        if self.scheme == Scheme::EulerMaruyama {
            let stiff = model.linear_rates().into_iter().fold(0.0, f64::max);
            if self.dt * stiff > EXPLICIT_STABILITY_BUDGET {
                warnings.push(format!(
                    "explicit scheme: dt·λ_max = {} exceeds the stability budget {}",
                    self.dt * stiff,
                    EXPLICIT_STABILITY_BUDGET
                ));
            }
        }
        Ok(warnings)
    }
}

/// Uniformly sampled trajectory, states stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    times: Vec<f64>,
    state_len: usize,
    data: Vec<f64>,
}

impl Path {
    pub fn new(times: Vec<f64>, state_len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != times.len() * state_len {
            return Err(Error::DimensionMismatch { expected: times.len() * state_len, got: data.len() });
        }
        Ok(Self { times, state_len, data })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_len(&self) -> usize {
        self.state_len
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.state_len..(i + 1) * self.state_len]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.state_len)
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// CSV with columns `t, c1, …`; `comments` become leading `#` lines.
    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        write!(w, "t")?;
        for k in 1..=self.state_len {
            write!(w, ",c{k}")?;
        }
        writeln!(w)?;
        for (t, s) in self.times.iter().zip(self.states()) {
            write!(w, "{}", fmt_f64(*t))?;
            for v in s {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of ensemble member `index`; member 0 also drives [`simulate_path`].
pub fn member_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Per-step integrator with precomputed exponential factors and scratch space.
pub struct Stepper<'a> {
    model: &'a Model,
    scheme: Scheme,
    dt: f64,
    amp: f64,
    decay: Vec<f64>,
    phi1: Vec<f64>,
    drift: Vec<f64>,
    noise: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a Model, dt: f64, scheme: Scheme, deterministic: bool) -> Self {
        let len = model.state_len();
        let rates = model.linear_rates();
        let (decay, phi1) = match scheme {
            Scheme::EulerMaruyama => (vec![1.0; len], vec![dt; len]),
            Scheme::SemiImplicitLinear => (
                rates.iter().map(|l| (-l * dt).exp()).collect(),
                rates.iter().map(|&l| if l == 0.0 { dt } else { -(-l * dt).exp_m1() / l }).collect(),
            ),
        };
        let amp = if deterministic { 0.0 } else { model.n().powf(-0.5) };
        Self { model, scheme, dt, amp, decay, phi1, drift: vec![0.0; len], noise: vec![0.0; len] }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `x` in place with Brownian increments `dw` (each `N(0, dt)`).
    // indexed loops read clearer than a four-way zip here
    #[allow(clippy::needless_range_loop)]
    pub fn step(&mut self, x: &mut [f64], dw: &[f64]) {
        let noisy = self.amp != 0.0;
        if noisy {
            self.model.diffusion_apply_into(x, dw, &mut self.noise);
        }
        match self.scheme {
            Scheme::EulerMaruyama => {
                self.model.drift_into(x, &mut self.drift);
                for i in 0..x.len() {
                    x[i] += self.drift[i] * self.dt;
                    if noisy {
                        x[i] += self.amp * self.noise[i];
                    }
                }
            }
            Scheme::SemiImplicitLinear => {
                self.model.nonlinear_drift_into(x, &mut self.drift);
                for i in 0..x.len() {
                    let mut v = self.decay[i] * x[i] + self.phi1[i] * self.drift[i];
                    if noisy {
                        v += self.decay[i] * self.amp * self.noise[i];
                    }
                    x[i] = v;
                }
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, dw: &mut [f64]) {
        if self.amp != 0.0 {
            let s = self.dt.sqrt();
            for w in dw.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *w = s * z;
            }
        }
    }
}

/// One step from `x` with given increments.
pub fn step(x: &[f64], model: &Model, dt: f64, scheme: Scheme, dw: &[f64], deterministic: bool) -> Result<Vec<f64>> {
    if x.len() != model.state_len() || dw.len() != model.noise_len() {
        return Err(Error::DimensionMismatch { expected: model.state_len(), got: x.len().min(dw.len()) });
    }
    let mut out = x.to_vec();
    Stepper::new(model, dt, scheme, deterministic).step(&mut out, dw);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 1, time: dt });
    }
    Ok(out)
}

fn run(x0: &[f64], model: &Model, cfg: &SimConfig, seed: u64, mut visit: impl FnMut(usize, &[f64])) -> Result<()> {
    if x0.len() != model.state_len() {
        return Err(Error::DimensionMismatch { expected: model.state_len(), got: x0.len() });
    }
    let steps = cfg.steps()?;
    let dt = cfg.horizon / steps as f64;
    let mut stepper = Stepper::new(model, dt, cfg.scheme, cfg.deterministic);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0.to_vec();
    let mut dw = vec![0.0; model.noise_len()];
    visit(0, &x);
    for k in 1..=steps {
        stepper.draw(&mut rng, &mut dw);
        stepper.step(&mut x, &dw);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k, time: k as f64 * dt });
        }
        visit(k, &x);
    }
    Ok(())
}

fn path_with_seed(x0: &[f64], model: &Model, cfg: &SimConfig, seed: u64) -> Result<Path> {
    let steps = cfg.steps()?;
    let dt = cfg.horizon / steps as f64;
    let every = cfg.record_every;
    let mut times = Vec::with_capacity(steps / every + 1);
    let mut data = Vec::with_capacity((steps / every + 1) * x0.len());
    run(x0, model, cfg, seed, |k, x| {
        if k % every == 0 {
            times.push(k as f64 * dt);
            data.extend_from_slice(x);
        }
    })?;
    Path::new(times, x0.len(), data)
}

/// Simulates one trajectory driven by the stream of member 0.
pub fn simulate_path(x0: &[f64], model: &Model, cfg: &SimConfig) -> Result<Path> {
    path_with_seed(x0, model, cfg, member_seed(cfg.seed, 0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberSample {
    pub index: usize,
    pub seed: u64,
    pub value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub samples: Vec<MemberSample>,
    pub aborted: usize,
}

impl EnsembleResult {
    /// Values of the members that completed.
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().filter_map(|s| s.value).collect()
    }

    /// `(mean, standard error)` with compensated summation.
    pub fn mean_stderr(&self) -> (f64, f64) {
        let v = self.values();
        let n = v.len() as f64;
        let mean = kahan_sum(v.iter().copied()) / n;
        let var = kahan_sum(v.iter().map(|x| (x - mean).powi(2))) / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }
}

pub fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for x in xs {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// Runs `cfg.ensemble` members and evaluates `f` on each path. Aborted
/// members are kept with their error message.
pub fn simulate_ensemble<F>(x0: &[f64], model: &Model, cfg: &SimConfig, f: F) -> Result<EnsembleResult>
where
    F: Fn(&Path) -> f64 + Sync,
{
    cfg.steps()?;
    let samples: Vec<MemberSample> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|i| {
            let seed = member_seed(cfg.seed, i as u64);
            match path_with_seed(x0, model, cfg, seed) {
                Ok(p) => MemberSample { index: i, seed, value: Some(f(&p)), error: None },
                Err(e) => MemberSample { index: i, seed, value: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let aborted = samples.iter().filter(|s| s.value.is_none()).count();
    if aborted == cfg.ensemble && cfg.ensemble > 0 {
        return Err(Error::AllMembersAborted(aborted));
    }
    Ok(EnsembleResult { samples, aborted })
}

/// Final states of every member (`None` for aborted members), in member order.
pub fn ensemble_final_states(x0: &[f64], model: &Model, cfg: &SimConfig) -> Result<Vec<Option<Vec<f64>>>> {
    let steps = cfg.steps()?;
    let ends: Vec<Option<Vec<f64>>> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|i| {
            let mut end = None;
            run(x0, model, cfg, member_seed(cfg.seed, i as u64), |k, x| {
                if k == steps {
                    end = Some(x.to_vec());
                }
            })
            .ok()
            .and(end)
        })
        .collect();
    if cfg.ensemble > 0 && ends.iter().all(|e| e.is_none()) {
        return Err(Error::AllMembersAborted(cfg.ensemble));
    }
    Ok(ends)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountResult {
    pub members: usize,
    pub hits: usize,
    pub aborted: usize,
}

/// Streaming variant for rare events: counts members whose path satisfies
/// `hit`, evaluated on every state with its step index, without storing paths.
/// `hit` returning true at any step marks the member.
pub fn ensemble_count<F>(x0: &[f64], model: &Model, cfg: &SimConfig, hit: F) -> Result<CountResult>
where
    F: Fn(usize, &[f64]) -> bool + Sync,
{
    cfg.steps()?;
    let (hits, aborted) = (0..cfg.ensemble)
        .into_par_iter()
        .map(|i| {
            let mut flag = false;
            match run(x0, model, cfg, member_seed(cfg.seed, i as u64), |k, x| flag |= hit(k, x)) {
                Ok(()) => (flag as usize, 0),
                Err(_) => (0, 1),
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if aborted == cfg.ensemble && cfg.ensemble > 0 {
        return Err(Error::AllMembersAborted(aborted));
    }
    Ok(CountResult { members: cfg.ensemble, hits, aborted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FwDrift, FwSigma, ModelSpec, PotentialSpec, NoiseSpec};
    use std::f64::consts::PI;

    fn ou(n: f64) -> Model {
        Model::new(ModelSpec::ornstein_uhlenbeck(n)).unwrap()
    }

    #[test]
    fn trivial_steps() {
        let zero = Model::new(ModelSpec::FiniteDimFw {
            n: 1.0,
            drift: FwDrift::Linear { matrix: vec![vec![0.0]] },
            sigma: FwSigma::Scaled { scale: 1.0 },
        })
        .unwrap();
        assert_eq!(step(&[0.7], &zero, 0.1, Scheme::EulerMaruyama, &[0.0], false).unwrap(), vec![0.7]);
        let x = step(&[1.0], &ou(1.0), 0.1, Scheme::EulerMaruyama, &[0.3], true).unwrap();
        assert!((x[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn heat_mode_decays_exactly() {
        // pure heat equation: unit viscosity, zero flux
        let model = Model::new(ModelSpec::Quasilinear { m: 5, n: 1.0, alpha: 1.0, flux: crate::models::FluxSpec::Constant { value: 0.0 } }).unwrap();
        let mut x = vec![0.0; 5];
        x[1] = 1.0;
        let out = step(&x, &model, 0.01, Scheme::SemiImplicitLinear, &[0.0; 5], true).unwrap();
        assert!((out[1] - (-4.0 * PI * PI * 0.01f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn linear_allen_cahn_decay() {
        let model = Model::new(ModelSpec::AllenCahn {
            dim: 1,
            m: 5,
            n: 1.0,
            potential: PotentialSpec::Quadratic { curvature: 1.0, offset: 0.0 },
            noise: NoiseSpec::Additive,
        })
        .unwrap();
        let mut x0 = vec![0.0; 5];
        x0[1] = 1.0;
        for scheme in [Scheme::EulerMaruyama, Scheme::SemiImplicitLinear] {
            let cfg = SimConfig::new(1e-4, 0.1).with_scheme(scheme).deterministic();
            let p = simulate_path(&x0, &model, &cfg).unwrap();
            let expect = (-(4.0 * PI * PI + 1.0) * 0.1f64).exp();
            assert!((p.final_state()[1] / expect - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn zero_stays_zero() {
        let model = Model::new(ModelSpec::AllenCahn {
            dim: 1,
            m: 4,
            n: 1.0,
            potential: PotentialSpec::default(),
            noise: NoiseSpec::Additive,
        })
        .unwrap();
        let p = simulate_path(&[0.0; 4], &model, &SimConfig::new(1e-3, 0.1).deterministic()).unwrap();
        assert!(p.data().iter().all(|v| *v == 0.0));
        assert_eq!(p.len(), 101);
    }

    #[test]
    fn same_seed_same_path() {
        let model = ou(4.0);
        let cfg = SimConfig::new(0.01, 1.0).with_seed(42);
        let a = simulate_path(&[0.3], &model, &cfg).unwrap();
        let b = simulate_path(&[0.3], &model, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&[0.3], &model, &cfg.clone().with_seed(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ensemble_of_one_is_a_path() {
        let model = ou(4.0);
        let cfg = SimConfig::new(0.01, 1.0).with_seed(7);
        let p = simulate_path(&[0.3], &model, &cfg).unwrap();
        let e = simulate_ensemble(&[0.3], &model, &cfg, |q| q.final_state()[0]).unwrap();
        assert_eq!(e.values(), vec![p.final_state()[0]]);
    }

    #[test]
    fn ou_moments() {
        let model = ou(1.0);
        let x0 = 1.5;
        let cfg = SimConfig::new(1e-3, 1.0).with_seed(3).with_ensemble(1000);
        let e = simulate_ensemble(&[x0], &model, &cfg, |p| p.final_state()[0]).unwrap();
        let (mean, se) = e.mean_stderr();
        assert!((mean - x0 * (-1.0f64).exp()).abs() < 3.0 * se);
        let v = e.values();
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        let target = 0.5 * (1.0 - (-2.0f64).exp());
        // standard error of the sample variance of a Gaussian
        let var_se = target * (2.0 / (v.len() - 1) as f64).sqrt();
        assert!((var - target).abs() < 3.0 * var_se, "{var} vs {target}");
    }

    #[test]
    fn counting_matches_ensemble() {
        let model = ou(4.0);
        let cfg = SimConfig::new(0.01, 1.0).with_seed(11).with_ensemble(500);
        let steps = cfg.steps().unwrap();
        let e = simulate_ensemble(&[0.0], &model, &cfg, |p| p.final_state()[0]).unwrap();
        let expect = e.values().iter().filter(|v| (**v - 0.3).abs() <= 0.2).count();
        let c = ensemble_count(&[0.0], &model, &cfg, |k, x| k == steps && (x[0] - 0.3).abs() <= 0.2).unwrap();
        assert_eq!(c.hits, expect);
        assert_eq!(c.members, 500);
    }

    #[test]
    fn blow_up_is_reported() {
        let model = Model::new(ModelSpec::FiniteDimFw {
            n: 1.0,
            drift: FwDrift::Linear { matrix: vec![vec![1e6]] },
            sigma: FwSigma::Scaled { scale: 1.0 },
        })
        .unwrap();
        let cfg = SimConfig::new(0.1, 100.0).deterministic();
        assert!(matches!(simulate_path(&[1.0], &model, &cfg), Err(Error::NonFinite { .. })));
        let cfg = cfg.with_ensemble(3);
        assert!(matches!(simulate_ensemble(&[1.0], &model, &cfg, |_| 0.0), Err(Error::AllMembersAborted(3))));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.0, 1.0).steps().is_err());
        assert!(SimConfig::new(0.3, 1.0).steps().is_err());
        assert_eq!(SimConfig::new(0.1, 1.0).steps().unwrap(), 10);
        assert!(SimConfig::new(0.1, 1.0).with_record_every(3).steps().is_err());
        let ch = Model::new(ModelSpec::CahnHilliard { dim: 1, m: 5, n: 1.0, potential: PotentialSpec::default() }).unwrap();
        let w = SimConfig::new(1e-3, 1.0).with_scheme(Scheme::EulerMaruyama).validate(&ch).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn csv_layout() {
        let p = Path::new(vec![0.0, 0.5], 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &["seed 1".into()]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# seed 1");
        assert_eq!(lines[1], "t,c1,c2");
        assert_eq!(lines.len(), 4);
    }
}
