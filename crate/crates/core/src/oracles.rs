//! Independent reference computations used only by tests.

/// Closed-form minimal action from 0 to `a` over `[0, t]` for `dX = −X dt + dW`.
pub fn ou_min_action(a: f64, t: f64) -> f64 {
    a * a * ((2.0 * t).exp() - 1.0) / (4.0 * t.sinh().powi(2))
}

/// Minimal action over piecewise-linear paths for the scalar linear SDE
/// `dX = −κX dt + σ dW` with pinned endpoints, from the tridiagonal normal
/// equations of the exactly integrated quadratic form. Returns `(action, nodes)`.
///
/// On an interval with end values `p, q` and `c = (q − p)/dt`,
/// `∫(ẋ + κx)² = dt·[c² + κc(p + q) + κ²(p² + pq + q²)/3]`.
pub fn linear_qp(kappa: f64, sigma: f64, x0: f64, x1: f64, t: f64, slices: usize) -> (f64, Vec<f64>) {
    let dt = t / slices as f64;
    let n = slices - 1;
    // the cross term telescopes; rows: off·x_{j−1} + diag·x_j + off·x_{j+1} = 0
    let diag = 2.0 / dt + 2.0 * kappa * kappa * dt / 3.0;
    let off = -1.0 / dt + kappa * kappa * dt / 6.0;
    let mut rhs = vec![0.0; n];
    rhs[0] -= off * x0;
    rhs[n - 1] -= off * x1;
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = off / diag;
    d[0] = rhs[0] / diag;
    for j in 1..n {
        let den = diag - off * c[j - 1];
        c[j] = off / den;
        d[j] = (rhs[j] - off * d[j - 1]) / den;
    }
    let mut inner = vec![0.0; n];
    inner[n - 1] = d[n - 1];
    for j in (0..n - 1).rev() {
        inner[j] = d[j] - c[j] * inner[j + 1];
    }
    let mut nodes = Vec::with_capacity(slices + 1);
    nodes.push(x0);
    nodes.extend(inner);
    nodes.push(x1);
    let value = nodes
        .windows(2)
        .map(|w| {
            let (p, q) = (w[0], w[1]);
            let c = (q - p) / dt;
            0.5 * dt * (c * c + kappa * c * (p + q) + kappa * kappa * (p * p + p * q + q * q) / 3.0) / (sigma * sigma)
        })
        .sum();
    (value, nodes)
}

/// Maximal `p·x_N − action` over piecewise-linear paths from `x0` with free
/// end for `dX = −κX dt + σ dW`: the normal equations are tridiagonal with the
/// last row carrying one interval only. Returns `(value, nodes)`.
pub fn linear_terminal_qp(kappa: f64, sigma: f64, x0: f64, p: f64, t: f64, slices: usize) -> (f64, Vec<f64>) {
    let dt = t / slices as f64;
    let s2 = sigma * sigma;
    // per interval ½[(q−p)²/dt + κ(q² − p²) + κ²dt(p² + pq + q²)/3]/σ²
    let d_full = (2.0 / dt + 2.0 * kappa * kappa * dt / 3.0) / s2;
    let off = (-1.0 / dt + kappa * kappa * dt / 6.0) / s2;
    let d_last = (1.0 / dt + kappa * kappa * dt / 3.0 + kappa) / s2;
    let n = slices;
    let diag: Vec<f64> = (0..n).map(|j| if j + 1 == n { d_last } else { d_full }).collect();
    let mut rhs = vec![0.0; n];
    rhs[0] -= off * x0;
    rhs[n - 1] += p;
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = off / diag[0];
    d[0] = rhs[0] / diag[0];
    for j in 1..n {
        let den = diag[j] - off * c[j - 1];
        c[j] = off / den;
        d[j] = (rhs[j] - off * d[j - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for j in (0..n - 1).rev() {
        x[j] = d[j] - c[j] * x[j + 1];
    }
    let mut nodes = vec![x0];
    nodes.extend(x);
    let cost: f64 = nodes
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let c = (b - a) / dt;
            0.5 * dt * (c * c + kappa * c * (a + b) + kappa * kappa * (a * a + a * b + b * b) / 3.0) / s2
        })
        .sum();
    (p * nodes[n] - cost, nodes)
}

/// Discounted control value `sup ∫₀^∞ e^{−s/α}(α⁻¹h(x) − ½u²) ds` for `ẋ = u`
/// from `x0`, by direct search over piecewise-constant controls with three
/// switch times (four levels; the last level holds forever).
pub fn discounted_brute_force(h: &dyn Fn(f64) -> f64, alpha: f64, x0: f64) -> f64 {
    let horizon = 40.0 * alpha;
    let steps = 4000;
    let ds = horizon / steps as f64;
    let value = |p: &[f64; 7]| -> f64 {
        let (t1, t2, t3) = (p[0].abs(), p[0].abs() + p[1].abs(), p[0].abs() + p[1].abs() + p[2].abs());
        let mut x = x0;
        let mut total = 0.0;
        for i in 0..steps {
            let s = (i as f64 + 0.5) * ds;
            let u = if s < t1 {
                p[3]
            } else if s < t2 {
                p[4]
            } else if s < t3 {
                p[5]
            } else {
                p[6]
            };
            let xm = x + 0.5 * ds * u;
            total += ds * (-s / alpha).exp() * (h(xm) / alpha - 0.5 * u * u);
            x += ds * u;
        }
        total
    };
    // coarse scan of the first two levels, then coordinate refinement
    let mut best = [0.2 * alpha, 0.2 * alpha, 0.2 * alpha, 0.0, 0.0, 0.0, 0.0];
    let mut best_v = value(&best);
    for u1 in -20..=20 {
        for t1 in 1..=8 {
            let cand = [t1 as f64 * 0.25 * alpha, 0.5 * alpha, 0.5 * alpha, u1 as f64 * 0.25, 0.0, 0.0, 0.0];
            let v = value(&cand);
            if v > best_v {
                best_v = v;
                best = cand;
            }
        }
    }
    let mut step = [0.1 * alpha, 0.1 * alpha, 0.1 * alpha, 0.2, 0.2, 0.2, 0.2];
    for _ in 0..60 {
        let mut improved = false;
        for k in 0..7 {
            for sgn in [-1.0, 1.0] {
                let mut cand = best;
                cand[k] += sgn * step[k];
                let v = value(&cand);
                if v > best_v {
                    best_v = v;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    best_v
}

/// `(1/n) e^{−nf(x)} (A_n e^{nf})(x)` assembled densely: the full Hessian of
/// `g = e^{n(f − f(x))}` from the chain rule, the full matrix `B Bᵀ`, and the
/// generator `⟨Dg, b⟩ + (1/2n) Tr[D²g B Bᵀ]` as a matrix trace.
pub fn dense_log_generator(
    f: &crate::hamiltonians::RadialTestFn,
    x: &[f64],
    model: &crate::Model,
) -> crate::Result<f64> {
    use nalgebra::{DMatrix, DVector};
    let len = x.len();
    let n = model.n();
    let df = DVector::from_vec(f.gradient(model, x)?);
    let mut hess = DMatrix::zeros(len, len);
    let mut bmat = DMatrix::zeros(len, len);
    let mut e = vec![0.0; len];
    for k in 0..len {
        e[k] = 1.0;
        hess.set_column(k, &DVector::from_vec(f.hessian_apply(model, x, &e)?));
        bmat.set_column(k, &DVector::from_vec(model.diffusion_apply(x, &e)?));
        e[k] = 0.0;
    }
    // g(x) = 1
    let dg = &df * n;
    let d2g = hess * n + &df * df.transpose() * (n * n);
    let b = DVector::from_vec(model.drift(x)?);
    let a = dg.dot(&b) + (d2g * &bmat * bmat.transpose()).trace() / (2.0 * n);
    Ok(a / n)
}

/// The same quantity for scalar `dX = −X dt + n^{-1/2} dW` and `f = ½μx²`,
/// with `A_n` applied to `e^{nf}` by centered first and second differences.
pub fn ou_log_generator_fd(mu: f64, x: f64, n: f64, h: f64) -> f64 {
    let g = |y: f64| (n * 0.5 * mu * (y * y - x * x)).exp();
    let d1 = (g(x + h) - g(x - h)) / (2.0 * h);
    let d2 = (g(x + h) - 2.0 + g(x - h)) / (h * h);
    (-x * d1 + d2 / (2.0 * n)) / n
}

/// `(1/n) e^{−nf}(A_n e^{nf})(x)` from values of `f` alone: every term is a
/// directional derivative, `⟨Df, b⟩` along `b` and both `⟨Df, Be_k⟩` and
/// `⟨D²f Be_k, Be_k⟩` along `Be_k`, each taken by an eighth-order central
/// stencil of step `h` on the unit direction.
pub fn fd_log_generator(
    f: &crate::hamiltonians::RadialTestFn,
    x: &[f64],
    model: &crate::Model,
    h: f64,
) -> crate::Result<f64> {
    const D1: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    const D2: [f64; 4] = [8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    const D2_CENTER: f64 = -205.0 / 72.0;
    let f0 = f.value(model, x)?;
    // (first, second) derivative of s ↦ f(x + s v)
    let along = |v: &[f64]| -> crate::Result<(f64, f64)> {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok((0.0, 0.0));
        }
        let (mut d1, mut d2) = (0.0, D2_CENTER * f0);
        for (j, (c1, c2)) in D1.iter().zip(&D2).enumerate() {
            let s = (j + 1) as f64 * h;
            let p: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + s * b / norm).collect();
            let m: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - s * b / norm).collect();
            let (fp, fm) = (f.value(model, &p)?, f.value(model, &m)?);
            d1 += c1 * (fp - fm);
            d2 += c2 * (fp + fm);
        }
        Ok((norm * d1 / h, norm * norm * d2 / (h * h)))
    };
    let drift = along(&model.drift(x)?)?.0;
    let (mut grad, mut trace) = (0.0, 0.0);
    let mut e = vec![0.0; model.noise_len()];
    for k in 0..e.len() {
        e[k] = 1.0;
        let (d1, d2) = along(&model.diffusion_apply(x, &e)?)?;
        grad += d1 * d1;
        trace += d2;
        e[k] = 0.0;
    }
    Ok(drift + 0.5 * grad + trace / (2.0 * model.n()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ou_fd_generator_matches_hand_expansion() {
        let (mu, n) = (1.3, 4.0);
        for x in [-0.7, 0.0, 0.5] {
            let want = -mu * x * x + 0.5 * mu * mu * x * x + mu / (2.0 * n);
            assert!((ou_log_generator_fd(mu, x, n, 1e-4) - want).abs() < 1e-5);
        }
    }

    #[test]
    fn value_only_generator_matches_hand_expansion() {
        let (mu, n) = (0.8, 5.0);
        let model = crate::Model::new(crate::ModelSpec::ornstein_uhlenbeck(n)).unwrap();
        let f = crate::hamiltonians::RadialTestFn::quadratic(mu, vec![0.0]);
        for x in [-1.2, 0.3, 0.9] {
            let want = -mu * x * x + 0.5 * mu * mu * x * x + mu / (2.0 * n);
            assert!((fd_log_generator(&f, &[x], &model, 1e-3).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn qp_matches_closed_form() {
        let (v, _) = linear_qp(1.0, 1.0, 0.0, 1.0, 1.0, 2000);
        assert!((v - ou_min_action(1.0, 1.0)).abs() < 1e-6);
        assert!((ou_min_action(1.0, 1.0) - 1.1565).abs() < 1e-4);
    }
}
