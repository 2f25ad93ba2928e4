//! Drift and noise operators of the supported diffusion families.
//!
//! Spectral families (Allen–Cahn, Cahn–Hilliard, quasilinear) act on coefficient
//! vectors of a truncated [`SpectralField`]; nonlinear terms are evaluated
//! pseudo-spectrally (grid, pointwise map, quadrature back, which also projects).
//! The finite-dimensional family acts on plain `R^d` vectors.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{d_theta_coeffs, default_grid_size, grid_point, laplacian_rates, SpectralField, Transform};

/// Below this value the noise coefficient is treated as degenerate.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Tolerance used for every dissipativity assertion.
pub const DISSIPATIVITY_TOL: f64 = 1e-9;

fn default_radius() -> f64 {
    2.0
}

/// Built-in potentials `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec {
    /// `V(r) = offset + curvature·r²/2`.
    Quadratic {
        curvature: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `(r²−1)²/4` on `|r| ≤ radius`, continued by its second-order Taylor
    /// polynomial at `±radius`, so that `V''` stays bounded.
    DoubleWell {
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::DoubleWell { radius: default_radius() }
    }
}

fn quartic(r: f64) -> [f64; 4] {
    let r2 = r * r;
    [(r2 - 1.0) * (r2 - 1.0) / 4.0, r2 * r - r, 3.0 * r2 - 1.0, 6.0 * r]
}

impl PotentialSpec {
    /// `[V, V', V'', V''']` at `r`.
    pub fn derivatives(&self, r: f64) -> [f64; 4] {
        match *self {
            PotentialSpec::Quadratic { curvature, offset } => {
                [offset + 0.5 * curvature * r * r, curvature * r, curvature, 0.0]
            }
            PotentialSpec::DoubleWell { radius } => {
                if r.abs() <= radius {
                    quartic(r)
                } else {
                    let [v0, v1, v2, _] = quartic(radius);
                    let s = r.abs() - radius;
                    let sign = r.signum();
                    [v0 + v1 * s + 0.5 * v2 * s * s, sign * (v1 + v2 * s), v2, 0.0]
                }
            }
        }
    }

    pub fn v(&self, r: f64) -> f64 {
        self.derivatives(r)[0]
    }

    pub fn dv(&self, r: f64) -> f64 {
        match *self {
            PotentialSpec::Quadratic { curvature, .. } => curvature * r,
            _ => self.derivatives(r)[1],
        }
    }

    pub fn d2v(&self, r: f64) -> f64 {
        match *self {
            PotentialSpec::Quadratic { curvature, .. } => curvature,
            _ => self.derivatives(r)[2],
        }
    }

    /// Declared `sup_r |V''(r)|`.
    pub fn sup_d2(&self) -> f64 {
        match *self {
            PotentialSpec::Quadratic { curvature, .. } => curvature.abs(),
            PotentialSpec::DoubleWell { radius } => (3.0 * radius * radius - 1.0).max(1.0),
        }
    }

    /// Declared `sup_r |V'''(r)|`.
    pub fn sup_d3(&self) -> f64 {
        match *self {
            PotentialSpec::Quadratic { .. } => 0.0,
            PotentialSpec::DoubleWell { radius } => 6.0 * radius,
        }
    }

    /// Declared `(c₁, c₂)` with `V(r) ≥ c₁ + c₂r²`.
    pub fn lower_bound(&self) -> (f64, f64) {
        match *self {
            PotentialSpec::Quadratic { curvature, offset } => (offset, 0.5 * curvature),
            PotentialSpec::DoubleWell { .. } => (-5.0 / 16.0, 0.25),
        }
    }

    /// Sampled check of the declared bounds on a dense grid of `[−50, 50]`.
    pub fn validate(&self) -> Result<()> {
        let sup = self.sup_d2();
        let (c1, c2) = self.lower_bound();
        if c2 <= 0.0 {
            return Err(Error::Condition {
                condition: "quadratic lower bound".into(),
                detail: format!("c2 = {c2} must be positive"),
            });
        }
        if let PotentialSpec::DoubleWell { radius } = *self {
            if radius < 1.25 {
                return Err(Error::InvalidArgument(format!(
                    "double-well blend radius {radius} must be at least 1.25"
                )));
            }
        }
        let samples = 200_001;
        for i in 0..samples {
            let r = -50.0 + 100.0 * i as f64 / (samples - 1) as f64;
            let [v, _, v2, _] = self.derivatives(r);
            if v2.abs() > sup * (1.0 + 1e-12) {
                return Err(Error::Condition {
                    condition: "bounded curvature".into(),
                    detail: format!("sup|V''| = {sup} exceeded at r = {r} (|V''| = {})", v2.abs()),
                });
            }
            if v < c1 + c2 * r * r - 1e-12 {
                return Err(Error::Condition {
                    condition: "quadratic lower bound".into(),
                    detail: format!("V({r}) = {v} < c1 + c2 r² = {}", c1 + c2 * r * r),
                });
            }
        }
        Ok(())
    }
}

/// Built-in fluxes `φ` for the viscous quasilinear family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FluxSpec {
    /// `φ(r) = value`.
    Constant { value: f64 },
    /// `φ(r) = speed·r`.
    Linear { speed: f64 },
    /// `r²/2` on `|r| ≤ radius`, linear growth with slope `±radius` outside.
    Burgers {
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

impl Default for FluxSpec {
    fn default() -> Self {
        FluxSpec::Burgers { radius: default_radius() }
    }
}

impl FluxSpec {
    pub fn phi(&self, r: f64) -> f64 {
        match *self {
            FluxSpec::Constant { value } => value,
            FluxSpec::Linear { speed } => speed * r,
            FluxSpec::Burgers { radius } => {
                if r.abs() <= radius {
                    0.5 * r * r
                } else {
                    radius * r.abs() - 0.5 * radius * radius
                }
            }
        }
    }

    pub fn dphi(&self, r: f64) -> f64 {
        match *self {
            FluxSpec::Constant { .. } => 0.0,
            FluxSpec::Linear { speed } => speed,
            FluxSpec::Burgers { radius } => r.clamp(-radius, radius),
        }
    }

    /// Declared `sup_r |φ'(r)|`.
    pub fn sup_dphi(&self) -> f64 {
        match *self {
            FluxSpec::Constant { .. } => 0.0,
            FluxSpec::Linear { speed } => speed.abs(),
            FluxSpec::Burgers { radius } => radius,
        }
    }
}

/// Profile `φ(θ, r_1, …, r_K)` of a multiplicative noise coefficient
/// `σ(θ; x) = φ(θ, ⟨x, ξ_1⟩, …, ⟨x, ξ_K⟩)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseProfile {
    Constant { value: f64 },
    /// `base + amplitude·cos(2πθ_1)·tanh(Σ_j r_j)`.
    Modulated { base: f64, amplitude: f64 },
}

impl NoiseProfile {
    pub fn eval(&self, theta: &[f64], r_sum: f64) -> f64 {
        match *self {
            NoiseProfile::Constant { value } => value,
            NoiseProfile::Modulated { base, amplitude } => {
                base + amplitude * (2.0 * PI * theta[0]).cos() * r_sum.tanh()
            }
        }
    }

    /// `∂φ/∂r_j`, identical for every `j`.
    pub fn d_r(&self, theta: &[f64], r_sum: f64) -> f64 {
        match *self {
            NoiseProfile::Constant { .. } => 0.0,
            NoiseProfile::Modulated { amplitude, .. } => {
                let t = r_sum.tanh();
                amplitude * (2.0 * PI * theta[0]).cos() * (1.0 - t * t)
            }
        }
    }

    /// Declared `M = sup |φ|`.
    pub fn sup(&self) -> f64 {
        match *self {
            NoiseProfile::Constant { value } => value.abs(),
            NoiseProfile::Modulated { base, amplitude } => base.abs() + amplitude.abs(),
        }
    }

    /// Declared lower bound of `φ`.
    pub fn inf(&self) -> f64 {
        match *self {
            NoiseProfile::Constant { value } => value,
            NoiseProfile::Modulated { base, amplitude } => base - amplitude.abs(),
        }
    }

    /// Declared Lipschitz constant in each `r_j`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            NoiseProfile::Constant { .. } => 0.0,
            NoiseProfile::Modulated { amplitude, .. } => amplitude.abs(),
        }
    }
}

/// Noise operator of the Allen–Cahn family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    /// `B(x) = identity` on the retained modes.
    #[default]
    Additive,
    /// Pointwise multiplication by `σ(θ; x)`.
    Multiplicative {
        #[serde(default)]
        probes: Vec<SpectralField>,
        profile: NoiseProfile,
    },
}

impl NoiseSpec {
    /// Declared `M = sup |σ|`.
    pub fn sup(&self) -> f64 {
        match self {
            NoiseSpec::Additive => 1.0,
            NoiseSpec::Multiplicative { profile, .. } => profile.sup(),
        }
    }
}

/// Drift of the finite-dimensional family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FwDrift {
    /// `b(x) = A x` with `A` given row by row.
    Linear { matrix: Vec<Vec<f64>> },
    /// `b(x) = −∇U(x)`, `U(x) = Σ_i V(x_i)`.
    Gradient { dim: usize, potential: PotentialSpec },
}

/// Diffusion matrix of the finite-dimensional family (state independent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FwSigma {
    /// `σ = scale·I`.
    Scaled { scale: f64 },
    Matrix { rows: Vec<Vec<f64>> },
}

/// Model families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    AllenCahn,
    CahnHilliard,
    Quasilinear,
    FiniteDimFw,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::AllenCahn => "allen-cahn",
            Family::CahnHilliard => "cahn-hilliard",
            Family::Quasilinear => "quasilinear",
            Family::FiniteDimFw => "finite-dim-fw",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Serializable description of one diffusion model. `n` is the noise scale:
/// the noise enters with amplitude `n^{-1/2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    AllenCahn {
        dim: usize,
        m: usize,
        n: f64,
        #[serde(default)]
        potential: PotentialSpec,
        #[serde(default)]
        noise: NoiseSpec,
    },
    CahnHilliard {
        dim: usize,
        m: usize,
        n: f64,
        #[serde(default)]
        potential: PotentialSpec,
    },
    Quasilinear {
        m: usize,
        n: f64,
        alpha: f64,
        #[serde(default)]
        flux: FluxSpec,
    },
    FiniteDimFw { n: f64, drift: FwDrift, sigma: FwSigma },
}

impl ModelSpec {
    pub fn family(&self) -> Family {
        match self {
            ModelSpec::AllenCahn { .. } => Family::AllenCahn,
            ModelSpec::CahnHilliard { .. } => Family::CahnHilliard,
            ModelSpec::Quasilinear { .. } => Family::Quasilinear,
            ModelSpec::FiniteDimFw { .. } => Family::FiniteDimFw,
        }
    }

    pub fn noise_scale(&self) -> f64 {
        match *self {
            ModelSpec::AllenCahn { n, .. }
            | ModelSpec::CahnHilliard { n, .. }
            | ModelSpec::Quasilinear { n, .. }
            | ModelSpec::FiniteDimFw { n, .. } => n,
        }
    }

    /// Same model with a different noise scale.
    pub fn with_noise_scale(&self, n_new: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            ModelSpec::AllenCahn { n, .. }
            | ModelSpec::CahnHilliard { n, .. }
            | ModelSpec::Quasilinear { n, .. }
            | ModelSpec::FiniteDimFw { n, .. } => *n = n_new,
        }
        s
    }

    /// Scalar Ornstein–Uhlenbeck `dX = −X dt + n^{-1/2} dW`.
    pub fn ornstein_uhlenbeck(n: f64) -> Self {
        ModelSpec::FiniteDimFw {
            n,
            drift: FwDrift::Linear { matrix: vec![vec![-1.0]] },
            sigma: FwSigma::Scaled { scale: 1.0 },
        }
    }
}

/// Result of [`scaling_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub family: Family,
    pub ratio: f64,
    pub budget: f64,
    pub pass: bool,
}

/// Mode-count versus noise-scale budget: `m^{4d}/n` (Allen–Cahn), `m^{3d}/n`
/// (Cahn–Hilliard), `m³/n` (quasilinear). The finite-dimensional family has no
/// such constraint and reports ratio 0.
pub fn scaling_check(family: Family, dim: usize, m: usize, n: f64, budget: f64) -> ScalingReport {
    let m = m as f64;
    let d = dim as i32;
    let ratio = match family {
        Family::AllenCahn => m.powi(4 * d) / n,
        Family::CahnHilliard => m.powi(3 * d) / n,
        Family::Quasilinear => m.powi(3) / n,
        Family::FiniteDimFw => 0.0,
    };
    ScalingReport { family, ratio, budget, pass: ratio <= budget }
}

/// Precomputed pieces of a spectral model.
#[derive(Clone, Debug)]
struct Spectral {
    dim: usize,
    m: usize,
    transform: Transform,
    /// `−Δ` eigenvalues per mode.
    lap: Vec<f64>,
    /// Grid coordinates of the first axis, used by the noise profile.
    theta: Vec<Vec<f64>>,
}

impl Spectral {
    fn new(dim: usize, m: usize) -> Result<Self> {
        let transform = Transform::new(dim, m, default_grid_size(m))?;
        let q = transform.q();
        let theta = (0..transform.grid_len())
            .map(|p| {
                let mut t = vec![0.0; dim];
                grid_point(dim, q, p, &mut t);
                t
            })
            .collect();
        Ok(Self { dim, m, lap: laplacian_rates(dim, m), transform, theta })
    }

    /// `P(g(P x))` for a pointwise map `g`.
    fn pointwise(&self, x: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut vals = self.transform.to_grid_values(x);
        vals.iter_mut().for_each(|v| *v = g(*v));
        self.transform.to_spectral_values(&vals)
    }

    /// `P(w(P x) · v)` for a pointwise weight `w`.
    fn weighted(&self, x: &[f64], v: &[f64], w: impl Fn(f64) -> f64) -> Vec<f64> {
        let gx = self.transform.to_grid_values(x);
        let mut gv = self.transform.to_grid_values(v);
        gv.iter_mut().zip(&gx).for_each(|(a, &b)| *a *= w(b));
        self.transform.to_spectral_values(&gv)
    }
}

#[derive(Clone, Debug)]
struct Probes {
    coeffs: Vec<Vec<f64>>,
    profile: NoiseProfile,
}

impl Probes {
    fn r_sum(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|xi| xi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).sum()
    }
}

#[derive(Clone, Debug)]
enum Kind {
    AllenCahn { sp: Spectral, potential: PotentialSpec, noise: Option<Probes> },
    CahnHilliard { sp: Spectral, potential: PotentialSpec },
    Quasilinear { sp: Spectral, alpha: f64, flux: FluxSpec },
    Fw(Fw),
}

#[derive(Clone, Debug)]
struct Fw {
    dim: usize,
    drift: FwDrift,
    a: Option<DMatrix<f64>>,
    sigma: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    /// `σ^{-T} σ^{-1}`
    precision: DMatrix<f64>,
    // hot-path copies: row-major drift matrix and σ when it is a multiple of I
    a_rows: Vec<f64>,
    scalar: Option<f64>,
}

/// Runtime form of a [`ModelSpec`] with all transforms precomputed.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    kind: Kind,
    state_len: usize,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        if !(spec.noise_scale() > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise scale n must be positive, got {}",
                spec.noise_scale()
            )));
        }
        let kind = match &spec {
            ModelSpec::AllenCahn { dim, m, potential, noise, .. } => {
                potential.validate()?;
                let sp = Spectral::new(*dim, *m)?;
                let noise = match noise {
                    NoiseSpec::Additive => None,
                    NoiseSpec::Multiplicative { probes, profile } => {
                        let mut coeffs = Vec::with_capacity(probes.len());
                        for p in probes {
                            if p.dim() != *dim {
                                return Err(Error::DimensionMismatch { expected: *dim, got: p.dim() });
                            }
                            coeffs.push(p.resize(*m)?.into_coeffs());
                        }
                        if profile.inf() <= 0.0 {
                            return Err(Error::Condition {
                                condition: "noise nondegeneracy".into(),
                                detail: format!("inf σ = {} must be positive", profile.inf()),
                            });
                        }
                        Some(Probes { coeffs, profile: profile.clone() })
                    }
                };
                Kind::AllenCahn { sp, potential: potential.clone(), noise }
            }
            ModelSpec::CahnHilliard { dim, m, potential, .. } => {
                potential.validate()?;
                Kind::CahnHilliard { sp: Spectral::new(*dim, *m)?, potential: potential.clone() }
            }
            ModelSpec::Quasilinear { m, alpha, flux, .. } => {
                if !(*alpha > 0.0) {
                    return Err(Error::InvalidArgument(format!("viscosity must be positive, got {alpha}")));
                }
                Kind::Quasilinear { sp: Spectral::new(1, *m)?, alpha: *alpha, flux: flux.clone() }
            }
            ModelSpec::FiniteDimFw { drift, sigma, .. } => Kind::Fw(Fw::new(drift, sigma)?),
        };
        let state_len = match &kind {
            Kind::AllenCahn { sp, .. } | Kind::CahnHilliard { sp, .. } | Kind::Quasilinear { sp, .. } => {
                sp.transform.coeff_len()
            }
            Kind::Fw(fw) => fw.dim,
        };
        Ok(Self { spec, kind, state_len })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family()
    }

    /// Noise scale `n`.
    pub fn n(&self) -> f64 {
        self.spec.noise_scale()
    }

    /// Length of the state vector (`m^d` coefficients or `d`).
    pub fn state_len(&self) -> usize {
        self.state_len
    }

    /// Number of independent Brownian drivers per step.
    pub fn noise_len(&self) -> usize {
        self.state_len
    }

    fn spectral(&self) -> Option<&Spectral> {
        match &self.kind {
            Kind::AllenCahn { sp, .. } | Kind::CahnHilliard { sp, .. } | Kind::Quasilinear { sp, .. } => Some(sp),
            Kind::Fw(_) => None,
        }
    }

    /// `(dim, m)` of a spectral model.
    pub fn spectral_shape(&self) -> Option<(usize, usize)> {
        self.spectral().map(|sp| (sp.dim, sp.m))
    }

    pub fn transform(&self) -> Option<&Transform> {
        self.spectral().map(|sp| &sp.transform)
    }

    /// `−Δ` eigenvalues per mode (spectral models).
    pub fn laplacian_eigenvalues(&self) -> Option<&[f64]> {
        self.spectral().map(|sp| sp.lap.as_slice())
    }

    pub fn potential(&self) -> Option<&PotentialSpec> {
        match &self.kind {
            Kind::AllenCahn { potential, .. } | Kind::CahnHilliard { potential, .. } => Some(potential),
            _ => None,
        }
    }

    /// Wraps a state vector as a [`SpectralField`].
    pub fn field(&self, x: Vec<f64>) -> Result<SpectralField> {
        let (dim, m) = self.spectral_shape().ok_or(Error::Unsupported {
            family: self.family().name(),
            what: "spectral field view".into(),
        })?;
        SpectralField::from_coeffs(dim, m, x)
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_len {
            return Err(Error::DimensionMismatch { expected: self.state_len, got: x.len() });
        }
        Ok(())
    }

    /// Rates `λ ≥ 0` of the stiff diagonal linear part `−λ·x` treated exactly by
    /// exponential integrators (zero for the finite-dimensional family).
    pub fn linear_rates(&self) -> Vec<f64> {
        match &self.kind {
            Kind::AllenCahn { sp, .. } => sp.lap.clone(),
            Kind::CahnHilliard { sp, .. } => sp.lap.iter().map(|l| l * l).collect(),
            Kind::Quasilinear { sp, alpha, .. } => sp.lap.iter().map(|l| alpha * l).collect(),
            Kind::Fw(fw) => vec![0.0; fw.dim],
        }
    }

    /// Full drift `b(x)`.
    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let mut out = vec![0.0; self.state_len];
        self.drift_into(x, &mut out);
        Ok(out)
    }

    /// Full drift written into `out` (no length checks).
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        let rates = match &self.kind {
            Kind::Fw(fw) => return fw.drift_into(x, out),
            _ => self.linear_rates(),
        };
        self.nonlinear_drift_into(x, out);
        for ((o, &l), &xi) in out.iter_mut().zip(&rates).zip(x) {
            *o -= l * xi;
        }
    }

    /// Drift minus its stiff linear part: `b(x) + λ·x`.
    pub fn nonlinear_drift_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            Kind::AllenCahn { sp, potential, .. } => {
                let nl = sp.pointwise(x, |r| potential.dv(r));
                out.iter_mut().zip(nl).for_each(|(o, v)| *o = -v);
            }
            Kind::CahnHilliard { sp, potential } => {
                let nl = sp.pointwise(x, |r| potential.dv(r));
                out.iter_mut().zip(nl.iter().zip(&sp.lap)).for_each(|(o, (v, l))| *o = -l * v);
            }
            Kind::Quasilinear { sp, flux, .. } => {
                let nl = sp.pointwise(x, |r| flux.phi(r));
                d_theta_coeffs(&nl, out);
                out.iter_mut().for_each(|o| *o = -*o);
            }
            Kind::Fw(fw) => fw.drift_into(x, out),
        }
    }

    /// Jacobian-vector product `Db(x)·v`.
    pub fn drift_jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::AllenCahn { sp, potential, .. } => {
                let vpp = sp.weighted(x, v, |r| potential.d2v(r));
                vpp.iter().zip(v).zip(&sp.lap).map(|((a, vi), l)| -l * vi - a).collect()
            }
            Kind::CahnHilliard { sp, potential } => {
                let vpp = sp.weighted(x, v, |r| potential.d2v(r));
                vpp.iter().zip(v).zip(&sp.lap).map(|((a, vi), l)| -l * (l * vi + a)).collect()
            }
            Kind::Quasilinear { sp, alpha, flux } => {
                let w = sp.weighted(x, v, |r| flux.dphi(r));
                let mut dw = vec![0.0; w.len()];
                d_theta_coeffs(&w, &mut dw);
                dw.iter().zip(v).zip(&sp.lap).map(|((d, vi), l)| -alpha * l * vi - d).collect()
            }
            Kind::Fw(fw) => fw.jvp(x, v),
        }
    }

    /// Transposed Jacobian product `Db(x)ᵀ·w`.
    pub fn drift_vjp(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        match &self.kind {
            // symmetric
            Kind::AllenCahn { .. } => self.drift_jvp(x, w),
            Kind::CahnHilliard { sp, potential } => {
                let lw: Vec<f64> = w.iter().zip(&sp.lap).map(|(a, l)| l * a).collect();
                let vpp = sp.weighted(x, &lw, |r| potential.d2v(r));
                vpp.iter().zip(&lw).zip(&sp.lap).map(|((a, lwi), l)| -(l * lwi + a)).collect()
            }
            Kind::Quasilinear { sp, alpha, flux } => {
                // ∂_θ is antisymmetric on the coefficient space
                let mut dw = vec![0.0; w.len()];
                d_theta_coeffs(w, &mut dw);
                let t = sp.weighted(x, &dw, |r| flux.dphi(r));
                t.iter().zip(w).zip(&sp.lap).map(|((a, wi), l)| -alpha * l * wi + a).collect()
            }
            Kind::Fw(fw) => fw.vjp(x, w),
        }
    }

    /// `P(V''(P x)·v)`: the linearized potential term (Allen–Cahn/Cahn–Hilliard).
    pub fn potential_hessian_apply(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            Kind::AllenCahn { sp, potential, .. } | Kind::CahnHilliard { sp, potential } => {
                Ok(sp.weighted(x, v, |r| potential.d2v(r)))
            }
            _ => Err(Error::Unsupported { family: self.family().name(), what: "potential Hessian".into() }),
        }
    }

    /// `σ(θ_p; x)` on the collocation grid, `None` for additive noise.
    pub fn sigma_grid(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::AllenCahn { sp, noise: Some(pr), .. } => {
                let r = pr.r_sum(x);
                Some(sp.theta.iter().map(|t| pr.profile.eval(t, r)).collect())
            }
            _ => None,
        }
    }

    /// Declared `sup |σ|` (1 for additive noise).
    pub fn sigma_sup(&self) -> f64 {
        match &self.kind {
            Kind::AllenCahn { noise: Some(pr), .. } => pr.profile.sup(),
            Kind::Fw(fw) => fw.sigma.norm(),
            _ => 1.0,
        }
    }

    /// `B(x)u`: pointwise multiplication then projection for multiplicative
    /// noise, `u` itself for additive noise, `σ u` for the finite family.
    pub fn diffusion_apply(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        self.check_len(u)?;
        let mut out = vec![0.0; self.state_len];
        self.diffusion_apply_into(x, u, &mut out);
        Ok(out)
    }

    /// `B(x)* g`. The projected multiplication operator is symmetric on the
    /// coefficient space, so only the finite family needs a transpose.
    pub fn diffusion_adjoint_apply(&self, x: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        self.check_len(g)?;
        match &self.kind {
            Kind::Fw(fw) => {
                Ok((0..fw.dim).map(|j| (0..fw.dim).map(|i| fw.sigma[(i, j)] * g[i]).sum()).collect())
            }
            _ => self.diffusion_apply(x, g),
        }
    }

    pub fn diffusion_apply_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match &self.kind {
            Kind::AllenCahn { sp, noise: Some(pr), .. } => {
                let r = pr.r_sum(x);
                let mut gu = sp.transform.to_grid_values(u);
                gu.iter_mut().zip(&sp.theta).for_each(|(g, t)| *g *= pr.profile.eval(t, r));
                out.copy_from_slice(&sp.transform.to_spectral_values(&gu));
            }
            Kind::Fw(fw) => {
                if let Some(s) = fw.scalar_sigma() {
                    out.iter_mut().zip(u).for_each(|(o, ui)| *o = s * ui);
                } else {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = (0..fw.dim).map(|j| fw.sigma[(i, j)] * u[j]).sum();
                    }
                }
            }
            _ => out.copy_from_slice(u),
        }
    }

    /// The control `u` with `B(x)u = g`, computed by pointwise division on the
    /// collocation grid (multiplicative noise) or `σ^{-1} g` (finite family).
    pub fn residual_control(&self, x: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            Kind::AllenCahn { sp, noise: Some(_), .. } => {
                let s = self.sigma_grid(x).expect("multiplicative");
                check_sigma(&s)?;
                let mut gg = sp.transform.to_grid_values(g);
                gg.iter_mut().zip(&s).for_each(|(a, b)| *a /= b);
                Ok(sp.transform.to_spectral_values(&gg))
            }
            Kind::Fw(fw) => Ok(fw.sigma_inv_apply(g)),
            _ => Ok(g.to_vec()),
        }
    }

    /// `‖u‖²` for the control solving `B(x)u = g`, with its gradients in `g` and `x`.
    ///
    /// For multiplicative noise the squared norm is the grid quadrature of
    /// `(g/σ)²`, i.e. the full `L²` norm of the quotient.
    pub fn residual_energy(&self, x: &[f64], g: &[f64]) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)> {
        match &self.kind {
            Kind::AllenCahn { sp, noise: Some(pr), .. } => {
                let r = pr.r_sum(x);
                let s: Vec<f64> = sp.theta.iter().map(|t| pr.profile.eval(t, r)).collect();
                check_sigma(&s)?;
                let gg = sp.transform.to_grid_values(g);
                let q = gg.len() as f64;
                let mut energy = 0.0;
                let mut w = vec![0.0; gg.len()];
                let mut ds = 0.0;
                for p in 0..gg.len() {
                    let ratio = gg[p] / s[p];
                    energy += ratio * ratio;
                    w[p] = 2.0 * ratio / s[p];
                    ds += -2.0 * ratio * ratio / s[p] * pr.profile.d_r(&sp.theta[p], r);
                }
                energy /= q;
                let grad_g = sp.transform.to_spectral_values(&w);
                let ds = ds / q;
                let mut grad_x = vec![0.0; g.len()];
                for xi in &pr.coeffs {
                    grad_x.iter_mut().zip(xi).for_each(|(o, c)| *o += ds * c);
                }
                Ok((energy, grad_g, Some(grad_x)))
            }
            Kind::Fw(fw) => {
                let u = fw.sigma_inv_apply(g);
                let energy = u.iter().map(|v| v * v).sum();
                let grad_g = (0..fw.dim)
                    .map(|i| 2.0 * (0..fw.dim).map(|j| fw.precision[(i, j)] * g[j]).sum::<f64>())
                    .collect();
                Ok((energy, grad_g, None))
            }
            _ => {
                let energy = g.iter().map(|v| v * v).sum();
                Ok((energy, g.iter().map(|v| 2.0 * v).collect(), None))
            }
        }
    }

    /// Shift `ω` making `b − ω·I` (minus its value at 0) dissipative.
    pub fn dissipativity_shift(&self) -> Result<f64> {
        match &self.kind {
            Kind::AllenCahn { potential, .. } => Ok(potential.sup_d2()),
            Kind::CahnHilliard { potential, .. } => Ok(0.25 * potential.sup_d2().powi(2)),
            Kind::Quasilinear { alpha, flux, .. } => Ok(flux.sup_dphi().powi(2) / (4.0 * alpha)),
            Kind::Fw(_) => Err(Error::Unsupported { family: "finite-dim-fw", what: "shifted operator".into() }),
        }
    }

    /// The shifted operator `C x = b(x) − b(0) − ω x`.
    pub fn shifted_operator(&self, x: &[f64]) -> Result<Vec<f64>> {
        let omega = self.dissipativity_shift()?;
        let b = self.drift(x)?;
        let b0 = self.drift(&vec![0.0; self.state_len])?;
        Ok(b.iter().zip(&b0).zip(x).map(|((a, z), xi)| a - z - omega * xi).collect())
    }

    /// Declared global Lipschitz constant of the finite-dimensional drift.
    pub fn fw_lipschitz(&self) -> Result<f64> {
        match &self.kind {
            Kind::Fw(fw) => Ok(fw.lipschitz()),
            _ => Err(Error::Unsupported { family: self.family().name(), what: "finite-dimensional Lipschitz constant".into() }),
        }
    }

    /// `(b(x), σ(x))` of the finite-dimensional family.
    pub fn fw_drift_diffusion(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        match &self.kind {
            Kind::Fw(fw) => {
                self.check_len(x)?;
                let mut b = vec![0.0; fw.dim];
                fw.drift_into(x, &mut b);
                Ok((b, fw.sigma.clone()))
            }
            _ => Err(Error::Unsupported { family: self.family().name(), what: "finite-dimensional drift".into() }),
        }
    }
}

fn check_sigma(s: &[f64]) -> Result<()> {
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < SIGMA_FLOOR {
        return Err(Error::SingularNoise { value: min, threshold: SIGMA_FLOOR });
    }
    Ok(())
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if d == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    for r in rows {
        if r.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl Fw {
    fn new(drift: &FwDrift, sigma: &FwSigma) -> Result<Self> {
        let (dim, a) = match drift {
            FwDrift::Linear { matrix } => {
                let a = matrix_from_rows(matrix)?;
                (a.nrows(), Some(a))
            }
            FwDrift::Gradient { dim, potential } => {
                potential.validate()?;
                if *dim == 0 {
                    return Err(Error::InvalidArgument("dimension must be positive".into()));
                }
                (*dim, None)
            }
        };
        let sigma = match sigma {
            FwSigma::Scaled { scale } => DMatrix::identity(dim, dim) * *scale,
            FwSigma::Matrix { rows } => {
                let s = matrix_from_rows(rows)?;
                if s.nrows() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: s.nrows() });
                }
                s
            }
        };
        let sigma_inv = sigma.clone().try_inverse().ok_or(Error::SingularNoise { value: 0.0, threshold: SIGMA_FLOOR })?;
        let precision = sigma_inv.transpose() * &sigma_inv;
        let a_rows = a.as_ref().map(|a| a.transpose().as_slice().to_vec()).unwrap_or_default();
        let s = sigma[(0, 0)];
        let scalar = (0..dim).all(|i| (0..dim).all(|j| sigma[(i, j)] == if i == j { s } else { 0.0 })).then_some(s);
        Ok(Self { dim, drift: drift.clone(), a, sigma, sigma_inv, precision, a_rows, scalar })
    }

    fn scalar_sigma(&self) -> Option<f64> {
        self.scalar
    }

    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match (&self.drift, &self.a) {
            (_, Some(_)) => {
                for (o, row) in out.iter_mut().zip(self.a_rows.chunks_exact(self.dim)) {
                    *o = row.iter().zip(x).map(|(a, xj)| a * xj).sum();
                }
            }
            (FwDrift::Gradient { potential, .. }, None) => {
                out.iter_mut().zip(x).for_each(|(o, &xi)| *o = -potential.dv(xi));
            }
            _ => unreachable!("linear drift always carries its matrix"),
        }
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match (&self.drift, &self.a) {
            (_, Some(a)) => (0..self.dim).map(|i| (0..self.dim).map(|j| a[(i, j)] * v[j]).sum()).collect(),
            (FwDrift::Gradient { potential, .. }, None) => {
                x.iter().zip(v).map(|(&xi, vi)| -potential.d2v(xi) * vi).collect()
            }
            _ => unreachable!(),
        }
    }

    fn vjp(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        match (&self.drift, &self.a) {
            (_, Some(a)) => (0..self.dim).map(|j| (0..self.dim).map(|i| a[(i, j)] * w[i]).sum()).collect(),
            _ => self.jvp(x, w),
        }
    }

    fn sigma_inv_apply(&self, g: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.sigma_inv[(i, j)] * g[j]).sum()).collect()
    }

    fn lipschitz(&self) -> f64 {
        match (&self.drift, &self.a) {
            (_, Some(a)) => a.clone().svd(false, false).singular_values.max(),
            (FwDrift::Gradient { potential, .. }, None) => potential.sup_d2(),
            _ => unreachable!(),
        }
    }
}

/// Outcome of [`dissipativity_check`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DissipativityReport {
    pub family: Family,
    pub shift: f64,
    pub trials: usize,
    /// Largest observed `⟨Cx − Cy, x − y⟩`.
    pub max_inner: f64,
    pub tol: f64,
    pub pass: bool,
    /// Pair attaining `max_inner` when the check fails.
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
}

/// Samples `trials` random pairs with coefficients uniform in `[−amplitude, amplitude]`
/// and checks `⟨Cx − Cy, x − y⟩ ≤ DISSIPATIVITY_TOL` for the shifted operator.
pub fn dissipativity_check(model: &Model, trials: usize, amplitude: f64, seed: u64) -> Result<DissipativityReport> {
    let shift = model.dissipativity_shift()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = model.state_len();
    let mut max_inner = f64::NEG_INFINITY;
    let mut worst = None;
    for _ in 0..trials {
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-amplitude..=amplitude)).collect();
        let y: Vec<f64> = (0..len).map(|_| rng.random_range(-amplitude..=amplitude)).collect();
        let cx = model.shifted_operator(&x)?;
        let cy = model.shifted_operator(&y)?;
        let inner: f64 = cx.iter().zip(&cy).zip(x.iter().zip(&y)).map(|((a, b), (p, q))| (a - b) * (p - q)).sum();
        if inner > max_inner {
            max_inner = inner;
            worst = Some((x, y));
        }
    }
    let pass = max_inner <= DISSIPATIVITY_TOL;
    Ok(DissipativityReport {
        family: model.family(),
        shift,
        trials,
        max_inner,
        tol: DISSIPATIVITY_TOL,
        pass,
        witness: if pass { None } else { worst },
    })
}
