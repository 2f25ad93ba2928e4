//! Experiment configuration: a versioned JSON document with one tagged
//! parameter block per experiment kind.

use std::path::Path as FsPath;

use ldp_core::format::to_json;
use ldp_core::hamiltonians::ContainmentConfig;
use ldp_core::models::{scaling_check, NoiseSpec, PotentialSpec};
use ldp_core::rate::MinimizeOptions;
use ldp_core::semigroup::{FamilySweep, Grid1D, ResolventOptions, TestFunctional};
use ldp_core::simulator::{Scheme, SimConfig};
use ldp_core::tataru::{SemigroupHandle, SuiteConfig};
use ldp_core::{Model, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Version string written into every artifact; bumped on incompatible changes.
pub const SCHEMA_VERSION: &str = "ldp-harness/1";

/// Top-level configuration. `output` is where artifacts go and is not part of
/// the hashed identity of the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Experiment {
    Simulate(SimulateParams),
    LdpSlope(LdpSlopeParams),
    Map(MapParams),
    SemigroupCompare(SemigroupCompareParams),
    ResolventIterate(ResolventIterateParams),
    Containment(ContainmentParams),
    TataruSuite(TataruSuiteParams),
    DissipativitySuite(DissipativityParams),
    Lyapunov(LyapunovParams),
}

impl Experiment {
    pub const KINDS: [&'static str; 9] = [
        "simulate",
        "ldp-slope",
        "map",
        "semigroup-compare",
        "resolvent-iterate",
        "containment",
        "tataru-suite",
        "dissipativity-suite",
        "lyapunov",
    ];

    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::LdpSlope(_) => "ldp-slope",
            Experiment::Map(_) => "map",
            Experiment::SemigroupCompare(_) => "semigroup-compare",
            Experiment::ResolventIterate(_) => "resolvent-iterate",
            Experiment::Containment(_) => "containment",
            Experiment::TataruSuite(_) => "tataru-suite",
            Experiment::DissipativitySuite(_) => "dissipativity-suite",
            Experiment::Lyapunov(_) => "lyapunov",
        }
    }

    /// The canned configuration of experiment `kind`.
    pub fn default_for(kind: &str) -> Option<Self> {
        Some(match kind {
            "simulate" => Experiment::Simulate(SimulateParams::default()),
            "ldp-slope" => Experiment::LdpSlope(LdpSlopeParams::default()),
            "map" => Experiment::Map(MapParams::default()),
            "semigroup-compare" => Experiment::SemigroupCompare(SemigroupCompareParams::default()),
            "resolvent-iterate" => Experiment::ResolventIterate(ResolventIterateParams::default()),
            "containment" => Experiment::Containment(ContainmentParams::default()),
            "tataru-suite" => Experiment::TataruSuite(TataruSuiteParams::default()),
            "dissipativity-suite" => Experiment::DissipativitySuite(DissipativityParams::default()),
            "lyapunov" => Experiment::Lyapunov(LyapunovParams::default()),
            _ => return None,
        })
    }
}

impl ExperimentConfig {
    pub fn new(seed: u64, experiment: Experiment) -> Self {
        Self { schema: SCHEMA_VERSION.into(), seed, output: None, experiment }
    }

    pub fn default_for(kind: &str) -> Option<Self> {
        Experiment::default_for(kind).map(|e| Self::new(0, e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("cannot parse config: {e}")))
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    /// Canonical JSON of everything that determines the results.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        to_json(&c).expect("config serializes")
    }

    /// Lower-case hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every precondition that can be decided before running.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(cfg_err("schema", format!("expected {SCHEMA_VERSION:?}, got {:?}", self.schema)));
        }
        match &self.experiment {
            Experiment::Simulate(p) => p.validate(),
            Experiment::LdpSlope(p) => p.validate(),
            Experiment::Map(p) => p.validate(),
            Experiment::SemigroupCompare(p) => p.validate(),
            Experiment::ResolventIterate(p) => p.validate(),
            Experiment::Containment(p) => p.validate(),
            Experiment::TataruSuite(p) => p.validate(),
            Experiment::DissipativitySuite(p) => p.validate(),
            Experiment::Lyapunov(p) => p.validate(),
        }
    }
}

fn cfg_err(condition: &str, detail: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{condition}: {detail}"))
}

fn build_model(spec: &ModelSpec) -> Result<Model> {
    Model::new(spec.clone()).map_err(|e| HarnessError::Config(format!("model: {e}")))
}

fn check_state(what: &str, x: &[f64], model: &Model) -> Result<()> {
    if x.len() != model.state_len() {
        return Err(cfg_err(what, format!("has {} entries, the model state has {}", x.len(), model.state_len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(cfg_err(what, "entries must be finite"));
    }
    Ok(())
}

fn check_sim(sim: &SimConfig, model: &Model) -> Result<()> {
    let warnings = sim.validate(model).map_err(|e| cfg_err("time grid", e))?;
    if let Some(w) = warnings.first() {
        return Err(cfg_err("explicit stability", w));
    }
    if sim.ensemble == 0 {
        return Err(cfg_err("ensemble", "must contain at least one member"));
    }
    Ok(())
}

fn check_scaling(model: &Model, n: f64, budget: Option<f64>) -> Result<()> {
    if let (Some(budget), Some((dim, m))) = (budget, model.spectral_shape()) {
        let r = scaling_check(model.family(), dim, m, n, budget);
        if !r.pass {
            return Err(cfg_err("mode-count scaling", format!("n = {n}: ratio {} exceeds budget {budget}", r.ratio)));
        }
    }
    Ok(())
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(cfg_err(what, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}

fn check_grid(grid: &Grid1D) -> Result<()> {
    grid.validate().map_err(|e| cfg_err("grid", e))
}

fn check_scalar(model: &Model, what: &str) -> Result<()> {
    if model.state_len() != 1 {
        return Err(cfg_err(what, format!("needs a scalar model, state has {} entries", model.state_len())));
    }
    Ok(())
}

fn allen_cahn(m: usize, n: f64) -> ModelSpec {
    ModelSpec::AllenCahn { dim: 1, m, n, potential: PotentialSpec::default(), noise: NoiseSpec::Additive }
}

/// Plain trajectory simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateParams {
    pub model: ModelSpec,
    pub x0: Vec<f64>,
    pub sim: SimConfig,
    #[serde(default)]
    pub scaling_budget: Option<f64>,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            model: allen_cahn(5, 100.0),
            x0: vec![0.3, 0.1, -0.1, 0.0, 0.0],
            sim: SimConfig::new(1e-3, 1.0).with_ensemble(16).with_record_every(10),
            scaling_budget: None,
        }
    }
}

impl SimulateParams {
    fn validate(&self) -> Result<()> {
        let model = build_model(&self.model)?;
        check_state("x0", &self.x0, &model)?;
        check_sim(&self.sim, &model)?;
        check_scaling(&model, model.n(), self.scaling_budget)
    }
}

/// Monte Carlo rate of a small ball around `target` at time `horizon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdpSlopeParams {
    /// Model template; its noise scale is replaced by each entry of `noise_scales`.
    pub model: ModelSpec,
    pub x0: Vec<f64>,
    pub target: Vec<f64>,
    pub radius: f64,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    pub noise_scales: Vec<f64>,
    /// Members per noise scale.
    pub ensembles: Vec<usize>,
    /// Points of the δ-net across the ball.
    pub net_points: usize,
    pub action_slices: usize,
    #[serde(default)]
    pub minimize: MinimizeOptions,
    /// Relative tolerance between `−slope` and the net infimum.
    pub tolerance: f64,
}

impl Default for LdpSlopeParams {
    fn default() -> Self {
        Self {
            model: ModelSpec::ornstein_uhlenbeck(1.0),
            x0: vec![0.0],
            target: vec![1.0],
            radius: 0.2,
            horizon: 1.0,
            dt: 0.01,
            scheme: Scheme::default(),
            noise_scales: vec![4.0, 16.0, 64.0],
            ensembles: vec![100_000, 40_000_000, 100_000],
            net_points: 9,
            action_slices: 200,
            minimize: MinimizeOptions::default(),
            tolerance: 0.15,
        }
    }
}

impl LdpSlopeParams {
    fn validate(&self) -> Result<()> {
        let model = build_model(&self.model)?;
        check_state("x0", &self.x0, &model)?;
        check_state("target", &self.target, &model)?;
        check_positive("radius", self.radius)?;
        check_positive("tolerance", self.tolerance)?;
        check_sim(&SimConfig::new(self.dt, self.horizon).with_scheme(self.scheme), &model)?;
        if self.noise_scales.is_empty() || self.noise_scales.len() != self.ensembles.len() {
            return Err(cfg_err(
                "noise scales",
                format!("{} scales and {} ensemble sizes; need one size per scale", self.noise_scales.len(), self.ensembles.len()),
            ));
        }
        for &n in &self.noise_scales {
            check_positive("noise scale", n)?;
        }
        if self.ensembles.contains(&0) {
            return Err(cfg_err("ensemble", "every noise scale needs at least one member"));
        }
        if self.net_points == 0 || self.action_slices < 4 {
            return Err(cfg_err("action oracle", "need at least one net point and four time slices"));
        }
        Ok(())
    }
}

/// Zero action of the noise-free flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowCheck {
    pub x0: Vec<f64>,
    pub horizon: f64,
    /// Spacing of the path whose action is measured.
    pub dt: f64,
    /// Step of the simulation that produces it.
    pub reference_dt: f64,
    pub tolerance: f64,
}

/// Minimum action paths between two states and their refinement behaviour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub model: ModelSpec,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub horizon: f64,
    /// Coarsest time grid; each refinement doubles it.
    pub slices: usize,
    pub refinements: usize,
    #[serde(default)]
    pub minimize: MinimizeOptions,
    pub gradient_samples: usize,
    pub gradient_amplitude: f64,
    pub gradient_tolerance: f64,
    pub flow: FlowCheck,
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            model: allen_cahn(5, 100.0),
            x0: vec![-0.95, 0.05, 0.0, 0.0, 0.0],
            x1: vec![0.95, 0.0, 0.05, 0.0, 0.0],
            horizon: 2.0,
            slices: 50,
            refinements: 3,
            minimize: MinimizeOptions::default(),
            gradient_samples: 20,
            gradient_amplitude: 0.05,
            gradient_tolerance: 1e-5,
            flow: FlowCheck {
                x0: vec![0.3, 0.015, -0.01, 0.0, 0.0],
                horizon: 1.0,
                dt: 1e-3,
                reference_dt: 1e-5,
                tolerance: 1e-5,
            },
        }
    }
}

impl MapParams {
    fn validate(&self) -> Result<()> {
        let model = build_model(&self.model)?;
        check_state("x0", &self.x0, &model)?;
        check_state("x1", &self.x1, &model)?;
        check_state("flow.x0", &self.flow.x0, &model)?;
        check_positive("horizon", self.horizon)?;
        if self.slices < 4 || self.refinements == 0 {
            return Err(cfg_err("time grid", "need at least four slices and one refinement level"));
        }
        check_positive("gradient tolerance", self.gradient_tolerance)?;
        let ratio = self.flow.dt / self.flow.reference_dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio < 1.0 {
            return Err(cfg_err("flow check", "dt must be a whole multiple of reference_dt"));
        }
        check_sim(&flow_sim(&self.flow), &model)
    }
}

pub(crate) fn flow_sim(f: &FlowCheck) -> SimConfig {
    let every = (f.dt / f.reference_dt).round() as usize;
    SimConfig::new(f.reference_dt, f.horizon).deterministic().with_record_every(every)
}

/// Monte Carlo `V_n(t)f` against the control value, and the semigroup lower
/// bound on the transition cost against the action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupCompareParams {
    pub model: ModelSpec,
    pub x0: Vec<f64>,
    pub t: f64,
    pub functionals: Vec<TestFunctional>,
    pub sim: SimConfig,
    /// Time slices of the control problem.
    pub slices: usize,
    #[serde(default)]
    pub minimize: MinimizeOptions,
    pub tolerance: f64,
    /// Endpoint pairs `(x, y)` for the duality bracket.
    pub pairs: Vec<(f64, f64)>,
    pub grid: Grid1D,
    pub sweep: FamilySweep,
    #[serde(default)]
    pub resolvent: ResolventOptions,
    pub action_slices: usize,
    pub duality_tolerance: f64,
}

impl Default for SemigroupCompareParams {
    fn default() -> Self {
        let lin = |p: f64| TestFunctional::Linear { p: vec![p], clip: 3.0 };
        Self {
            model: ModelSpec::ornstein_uhlenbeck(64.0),
            x0: vec![2.0],
            t: 1.0,
            functionals: vec![
                lin(0.5),
                lin(-0.5),
                lin(0.25),
                TestFunctional::Quadratic { c: 0.5, center: vec![0.0], clip: 3.0 },
                TestFunctional::Radial { height: 1.0, width: 1.0, center: vec![0.0] },
            ],
            sim: SimConfig::new(0.01, 1.0).with_ensemble(100_000),
            slices: 100,
            minimize: MinimizeOptions::default(),
            tolerance: 0.1,
            pairs: vec![(0.0, 0.3), (0.5, 0.0), (-0.4, 0.2), (1.0, 0.6), (0.0, -0.5)],
            grid: Grid1D { a: -3.0, b: 3.0, points: 1201 },
            sweep: FamilySweep::default(),
            resolvent: ResolventOptions::default(),
            action_slices: 200,
            duality_tolerance: 1e-3,
        }
    }
}

impl SemigroupCompareParams {
    fn validate(&self) -> Result<()> {
        let model = build_model(&self.model)?;
        check_scalar(&model, "duality bracket")?;
        check_state("x0", &self.x0, &model)?;
        check_positive("t", self.t)?;
        let mut sim = self.sim.clone();
        sim.horizon = self.t;
        check_sim(&sim, &model)?;
        if self.functionals.is_empty() {
            return Err(cfg_err("functionals", "need at least one test functional"));
        }
        check_grid(&self.grid)?;
        for &(x, y) in &self.pairs {
            if !(self.grid.a..=self.grid.b).contains(&x) || !(self.grid.a..=self.grid.b).contains(&y) {
                return Err(cfg_err("pairs", format!("({x}, {y}) lies outside the grid")));
            }
        }
        if self.sweep.k == 0 || self.slices < 4 || self.action_slices < 4 {
            return Err(cfg_err("discretization", "need k >= 1 and at least four time slices"));
        }
        Ok(())
    }
}

/// Cauchy behaviour of the resolvent product in `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventIterateParams {
    pub model: ModelSpec,
    pub grid: Grid1D,
    pub t: f64,
    pub h: TestFunctional,
    pub ks: Vec<usize>,
    /// Points where the finest iterate is compared with the control value.
    pub check_points: Vec<f64>,
    pub slices: usize,
    #[serde(default)]
    pub minimize: MinimizeOptions,
    pub tolerance: f64,
    #[serde(default)]
    pub resolvent: ResolventOptions,
}

impl Default for ResolventIterateParams {
    fn default() -> Self {
        Self {
            model: ModelSpec::ornstein_uhlenbeck(64.0),
            grid: Grid1D { a: -4.0, b: 4.0, points: 321 },
            t: 1.0,
            h: TestFunctional::Linear { p: vec![1.0], clip: 3.0 },
            ks: vec![8, 16, 32, 64],
            check_points: (0..9).map(|i| i as f64 * 0.25).collect(),
            slices: 100,
            minimize: MinimizeOptions::default(),
            tolerance: 0.05,
            resolvent: ResolventOptions::default(),
        }
    }
}

impl ResolventIterateParams {
    fn validate(&self) -> Result<()> {
        let model = build_model(&self.model)?;
        check_scalar(&model, "resolvent iteration")?;
        check_grid(&self.grid)?;
        check_positive("t", self.t)?;
        if self.ks.len() < 2 || self.ks.contains(&0) || self.ks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err("ks", "need at least two strictly increasing positive step counts"));
        }
        if let Some(x) = self.check_points.iter().find(|x| !(self.grid.a..=self.grid.b).contains(*x)) {
            return Err(cfg_err("check points", format!("{x} lies outside the grid")));
        }
        Ok(())
    }
}

/// Exceedance frequencies of a free-energy level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentParams {
    pub model: ModelSpec,
    pub x0: Vec<f64>,
    pub containment: ContainmentConfig,
}

impl Default for ContainmentParams {
    fn default() -> Self {
        Self {
            model: allen_cahn(4, 64.0),
            x0: vec![-1.0, 0.0, 0.0, 0.0],
            containment: ContainmentConfig {
                level: 0.02,
                initial_level: 0.0,
                noise_scales: vec![64.0, 128.0, 256.0],
                sim: SimConfig::new(0.01, 1.0).with_ensemble(4000),
                scaling_budget: 4.0,
            },
        }
    }
}

impl ContainmentParams {
    fn validate(&self) -> Result<()> {
        let model = build_model(&self.model)?;
        check_state("x0", &self.x0, &model)?;
        check_sim(&self.containment.sim, &model)?;
        let c = &self.containment;
        if c.level <= c.initial_level {
            return Err(cfg_err("containment levels", format!("level {} must exceed the initial level {}", c.level, c.initial_level)));
        }
        if c.noise_scales.is_empty() {
            return Err(cfg_err("noise scales", "need at least one"));
        }
        for &n in &c.noise_scales {
            check_scaling(&model, n, Some(c.scaling_budget))?;
        }
        Ok(())
    }
}

/// Semigroups exercised by the distance suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SemigroupSpec {
    /// `S(t)y = e^{−t}y` on the line.
    ScalarDecay,
    /// Heat flow on the truncated torus.
    SpectralHeat { dim: usize, m: usize },
    /// Diagonal decay with the given rates.
    Spectral { rates: Vec<f64> },
    /// `e^{tA}` for a dissipative matrix.
    Matrix { rows: Vec<Vec<f64>> },
}

impl SemigroupSpec {
    pub fn build(&self) -> Result<SemigroupHandle> {
        match self {
            SemigroupSpec::ScalarDecay => Ok(SemigroupHandle::scalar_decay()),
            SemigroupSpec::SpectralHeat { dim, m } => {
                if *dim == 0 || *dim > ldp_core::spectral::MAX_DIM || *m == 0 {
                    return Err(cfg_err("semigroup", format!("heat flow needs 1 <= dim <= 3 and m >= 1 (dim = {dim}, m = {m})")));
                }
                Ok(SemigroupHandle::spectral_heat(*dim, *m))
            }
            SemigroupSpec::Spectral { rates } => SemigroupHandle::spectral(rates.clone()).map_err(|e| cfg_err("semigroup", e)),
            SemigroupSpec::Matrix { rows } => SemigroupHandle::finite_dim(rows).map_err(|e| cfg_err("semigroup", e)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SemigroupSpec::ScalarDecay => "scalar-decay".into(),
            SemigroupSpec::SpectralHeat { dim, m } => format!("spectral-heat-d{dim}-m{m}"),
            SemigroupSpec::Spectral { rates } => format!("spectral-{}", rates.len()),
            SemigroupSpec::Matrix { rows } => format!("matrix-{}", rows.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TataruSuiteParams {
    pub semigroups: Vec<SemigroupSpec>,
    /// `seed` inside is replaced by one derived from the config seed.
    pub suite: SuiteConfig,
    pub semigroup_samples: usize,
}

impl Default for TataruSuiteParams {
    fn default() -> Self {
        Self {
            semigroups: vec![SemigroupSpec::ScalarDecay, SemigroupSpec::SpectralHeat { dim: 1, m: 4 }],
            suite: SuiteConfig::default(),
            semigroup_samples: 500,
        }
    }
}

impl TataruSuiteParams {
    fn validate(&self) -> Result<()> {
        if self.semigroups.is_empty() {
            return Err(cfg_err("semigroups", "need at least one"));
        }
        for s in &self.semigroups {
            s.build()?;
        }
        check_positive("eps", self.suite.eps)?;
        if let Some(a) = self.suite.a_values.iter().find(|a| !(**a > 1.0)) {
            return Err(cfg_err("soft-min weight", format!("a_n must exceed 1, got {a}")));
        }
        if self.suite.samples == 0 || self.semigroup_samples == 0 {
            return Err(cfg_err("samples", "must be positive"));
        }
        Ok(())
    }
}

/// Structural checks of the spectral layer and the models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipativityParams {
    /// Models whose shifted drift must be dissipative.
    pub models: Vec<ModelSpec>,
    pub pairs: usize,
    pub amplitude: f64,
    /// Eigenvalue-sum bound over `1..=max_m` and `1..=max_dim`.
    pub max_m: usize,
    pub max_dim: usize,
    /// Random fields per dimension for the Poincaré inequality.
    pub poincare_fields: usize,
    pub poincare_m: usize,
    /// Truncation for the Parseval and orthonormality checks.
    pub transform_m: usize,
    pub transform_tolerance: f64,
    /// Model and run used for the bitwise determinism check.
    pub determinism_model: ModelSpec,
    pub determinism_sim: SimConfig,
    /// Cahn–Hilliard model whose constant mode must have zero drift.
    pub cahn_hilliard: ModelSpec,
}

impl Default for DissipativityParams {
    fn default() -> Self {
        Self {
            models: vec![
                allen_cahn(8, 100.0),
                ModelSpec::AllenCahn { dim: 2, m: 4, n: 100.0, potential: PotentialSpec::default(), noise: NoiseSpec::Additive },
                ModelSpec::CahnHilliard { dim: 1, m: 8, n: 100.0, potential: PotentialSpec::default() },
                ModelSpec::CahnHilliard { dim: 2, m: 4, n: 100.0, potential: PotentialSpec::default() },
            ],
            pairs: 500,
            amplitude: 1.0,
            max_m: 16,
            max_dim: 3,
            poincare_fields: 200,
            poincare_m: 6,
            transform_m: 5,
            transform_tolerance: 1e-10,
            determinism_model: allen_cahn(4, 64.0),
            determinism_sim: SimConfig::new(1e-3, 0.5).with_ensemble(8).with_record_every(10),
            cahn_hilliard: ModelSpec::CahnHilliard { dim: 1, m: 6, n: 100.0, potential: PotentialSpec::default() },
        }
    }
}

impl DissipativityParams {
    fn validate(&self) -> Result<()> {
        for spec in &self.models {
            build_model(spec)?;
        }
        let det = build_model(&self.determinism_model)?;
        check_sim(&self.determinism_sim, &det)?;
        let ch = build_model(&self.cahn_hilliard)?;
        if ch.family() != ldp_core::Family::CahnHilliard {
            return Err(cfg_err("constant-mode check", format!("needs a cahn-hilliard model, got {}", ch.family())));
        }
        if self.max_dim == 0 || self.max_dim > ldp_core::spectral::MAX_DIM {
            return Err(cfg_err("eigenvalue bound", format!("dimension must be 1..=3, got {}", self.max_dim)));
        }
        check_positive("amplitude", self.amplitude)?;
        check_positive("transform tolerance", self.transform_tolerance)
    }
}

/// Generator bound on the log free energy over random truncated fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub model: ModelSpec,
    pub fields: usize,
    pub amplitude: f64,
    pub tolerance: f64,
    /// Fields on which the analytic derivatives of the test function are
    /// compared with differences.
    pub derivative_fields: usize,
    pub derivative_tolerance: f64,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        Self {
            model: allen_cahn(4, 512.0),
            fields: 1000,
            amplitude: 2.0,
            tolerance: 1e-8,
            derivative_fields: 50,
            derivative_tolerance: 1e-6,
        }
    }
}

impl LyapunovParams {
    fn validate(&self) -> Result<()> {
        let model = build_model(&self.model)?;
        if model.family() != ldp_core::Family::AllenCahn {
            return Err(cfg_err("lyapunov bound", format!("defined for allen-cahn only, got {}", model.family())));
        }
        check_positive("amplitude", self.amplitude)
    }
}

