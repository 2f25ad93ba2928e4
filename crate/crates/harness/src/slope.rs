//! Large-deviation slope: Monte Carlo frequencies of a small target ball at
//! several noise scales, compared with the minimal action into the ball.

use ldp_core::hamiltonians::{fit_log_slope, FrequencyCell};
use ldp_core::rate::minimize_action;
use ldp_core::simulator::{ensemble_count, member_seed, simulate_path, SimConfig};
use ldp_core::Model;
use serde::Serialize;

use crate::config::LdpSlopeParams;
use crate::error::Result;
use crate::output::{b, f, u, Outcome, Table};

/// One point of the δ-net and its minimal action.
#[derive(Clone, Debug, Serialize)]
pub struct NetPoint {
    /// Signed position along the net direction, in units of the radius.
    pub s: f64,
    pub point: Vec<f64>,
    pub action: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeReport {
    pub cells: Vec<FrequencyCell>,
    /// Slope of `log frequency` against `n`.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    /// Smallest action over the net; an upper bound on the infimum over the ball.
    pub action_inf: f64,
    pub net: Vec<NetPoint>,
    /// `|−slope − action_inf| / max(action_inf, 1/max n)`.
    pub relative_error: Option<f64>,
    /// No member hit the target at any noise scale.
    pub inconclusive: bool,
    pub pass: bool,
    /// Why the run did not pass, when it did not.
    pub reason: Option<String>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The net runs through the target along the direction of the noise-free
/// endpoint, where the cheapest part of the ball lies for a convex cost.
fn net_direction(target: &[f64], flow_end: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = flow_end.iter().zip(target).map(|(a, b)| a - b).collect();
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1e-12 {
        d.iter().map(|v| v / norm).collect()
    } else {
        let mut e = vec![0.0; target.len()];
        e[0] = 1.0;
        e
    }
}

pub fn ldp_slope(p: &LdpSlopeParams, seed: u64) -> Result<(SlopeReport, Vec<ldp_core::simulator::Path>)> {
    let base = Model::new(p.model.clone())?;
    let template = SimConfig::new(p.dt, p.horizon).with_scheme(p.scheme);
    let steps = template.steps()?;

    let mut cells = Vec::with_capacity(p.noise_scales.len());
    for (i, (&n, &members)) in p.noise_scales.iter().zip(&p.ensembles).enumerate() {
        let model = Model::new(p.model.with_noise_scale(n))?;
        let cfg = template.clone().with_ensemble(members).with_seed(member_seed(seed, i as u64));
        let count = ensemble_count(&p.x0, &model, &cfg, |k, x| k == steps && dist(x, &p.target) <= p.radius)?;
        cells.push(FrequencyCell::new(n, count.hits, count.aborted, count.members));
    }
    let (slope, slope_stderr) = fit_log_slope(&cells);

    let flow = simulate_path(&p.x0, &base, &template.clone().deterministic())?;
    let dir = net_direction(&p.target, flow.final_state());
    let mut net = Vec::with_capacity(p.net_points);
    let mut best: Option<(f64, ldp_core::simulator::Path)> = None;
    for j in 0..p.net_points {
        let s = if p.net_points == 1 { 0.0 } else { 2.0 * j as f64 / (p.net_points - 1) as f64 - 1.0 };
        let point: Vec<f64> = p.target.iter().zip(&dir).map(|(c, d)| c + p.radius * s * d).collect();
        let (path, report) = minimize_action(&p.x0, &point, p.horizon, &base, p.action_slices, &p.minimize, None)?;
        if best.as_ref().is_none_or(|(a, _)| report.total < *a) {
            best = Some((report.total, path));
        }
        net.push(NetPoint { s, point, action: report.total, converged: report.converged });
    }
    let (action_inf, instanton) = best.expect("net has at least one point");

    let inconclusive = cells.iter().all(|c| c.hits == 0);
    let n_max = p.noise_scales.iter().cloned().fold(0.0, f64::max);
    let relative_error = slope.map(|s| (-s - action_inf).abs() / action_inf.max(1.0 / n_max));
    let reason = if inconclusive {
        Some("inconclusive: no hits at any noise scale".to_string())
    } else if slope.is_none() {
        Some("fewer than two uncensored cells".to_string())
    } else if net.iter().any(|q| !q.converged) {
        Some("action minimization did not converge".to_string())
    } else if relative_error.is_some_and(|e| e > p.tolerance) {
        Some(format!("relative error exceeds {}", p.tolerance))
    } else {
        None
    };
    let pass = reason.is_none();
    let report = SlopeReport { cells, slope, slope_stderr, action_inf, net, relative_error, inconclusive, pass, reason };
    Ok((report, vec![instanton]))
}

pub fn run(p: &LdpSlopeParams, seed: u64) -> Result<Outcome> {
    let (report, paths) = ldp_slope(p, seed)?;
    let mut freq = Table::new("frequencies", &["n", "members", "aborted", "hits", "frequency", "censored", "rate_estimate"]);
    for c in &report.cells {
        freq.push(vec![
            f(c.n),
            u(c.trials + c.aborted),
            u(c.aborted),
            u(c.hits),
            f(c.frequency),
            b(c.censored),
            f(-c.frequency.ln() / c.n),
        ]);
    }
    let mut net = Table::new("net", &["s", "action", "converged"]);
    for q in &report.net {
        net.push(vec![f(q.s), f(q.action), b(q.converged)]);
    }
    let mut out = Outcome::new(report.pass, &report);
    out.tables = vec![freq, net];
    out.paths = paths.into_iter().map(|p| ("instanton".to_string(), p)).collect();
    Ok(out)
}
