//! Tensor Fourier basis on the periodic unit torus `[0,1]^d`.
//!
//! The 1-D basis is `φ_1 ≡ 1`, `φ_{2k}(r) = √2 sin(2πkr)`, `φ_{2k+1}(r) = √2 cos(2πkr)`,
//! so that `−φ_j'' = μ_j φ_j` with `μ_j = 4π²⌊j/2⌋²`. Tensor modes `e_k` are products
//! of 1-D modes, one per axis, and coefficient arrays are stored in lexicographic
//! order of the multi-index `(k_1, …, k_d)` with `k_1` most significant.
//!
//! Nonlinear terms are handled pseudo-spectrally: values on a uniform grid of `q`
//! points per axis, with the trapezoid rule as the (exact, for `q ≥ 2m+1`)
//! quadrature back to coefficients.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

const TWO_PI: f64 = 2.0 * PI;

/// Eigenvalue of `−d²/dr²` on the 1-D mode `φ_j` (1-based).
pub fn mu(j: usize) -> f64 {
    debug_assert!(j >= 1, "mode indices are 1-based");
    let k = (j / 2) as f64;
    4.0 * PI * PI * k * k
}

/// Frequency `k` carried by 1-D mode `j` (0 for the constant mode).
#[inline]
pub fn frequency(j: usize) -> usize {
    j / 2
}

/// 1-D basis function `φ_j(r)`.
pub fn phi(j: usize, r: f64) -> f64 {
    debug_assert!(j >= 1, "mode indices are 1-based");
    let k = frequency(j);
    if k == 0 {
        1.0
    } else if j.is_multiple_of(2) {
        SQRT_2 * (TWO_PI * k as f64 * r).sin()
    } else {
        SQRT_2 * (TWO_PI * k as f64 * r).cos()
    }
}

/// Multi-index `(k_1, …, k_d)` of a tensor mode, components 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasisIndex(Vec<usize>);

impl BasisIndex {
    pub fn new(components: Vec<usize>) -> Result<Self> {
        if components.is_empty() || components.len() > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "basis index must have 1..={MAX_DIM} components, got {}",
                components.len()
            )));
        }
        if components.contains(&0) {
            return Err(Error::InvalidArgument("basis index components are 1-based".into()));
        }
        Ok(Self(components))
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Position in the lexicographic coefficient array of truncation `m`.
    pub fn flat(&self, m: usize) -> Result<usize> {
        let mut idx = 0;
        for &k in &self.0 {
            if k > m {
                return Err(Error::InvalidArgument(format!(
                    "component {k} exceeds truncation m = {m}"
                )));
            }
            idx = idx * m + (k - 1);
        }
        Ok(idx)
    }

    pub fn from_flat(dim: usize, m: usize, mut flat: usize) -> Self {
        let mut comps = vec![0; dim];
        for slot in comps.iter_mut().rev() {
            *slot = flat % m + 1;
            flat /= m;
        }
        Self(comps)
    }

    /// Sum of the 1-D eigenvalues: the `−Δ` eigenvalue of `e_k`.
    pub fn laplacian_eigenvalue(&self) -> f64 {
        self.0.iter().map(|&k| mu(k)).sum()
    }
}

/// Tensor basis function `e_k(θ)`.
pub fn eval_basis(k: &BasisIndex, theta: &[f64]) -> f64 {
    debug_assert_eq!(k.dim(), theta.len());
    k.0.iter().zip(theta).map(|(&j, &r)| phi(j, r)).product()
}

/// `−Δ` eigenvalue of every mode of truncation `m`, in coefficient order.
pub fn laplacian_rates(dim: usize, m: usize) -> Vec<f64> {
    let one_d: Vec<f64> = (1..=m).map(mu).collect();
    let mut rates = vec![0.0];
    for _ in 0..dim {
        rates = rates
            .iter()
            .flat_map(|&r| one_d.iter().map(move |&l| r + l))
            .collect();
    }
    rates
}

/// `Σ_{i ∈ {1..m}^d} Π_j μ_{i_j}`, the product-form eigenvalue sum, evaluated as `(Σ_i μ_i)^d`.
pub fn product_eigenvalue_sum(dim: usize, m: usize) -> f64 {
    let s: f64 = (1..=m).map(mu).sum();
    s.powi(dim as i32)
}

/// Closed-form upper bound `4^d π^{2d} (1+m)^{3d} / 3` on [`product_eigenvalue_sum`].
pub fn product_eigenvalue_bound(dim: usize, m: usize) -> f64 {
    let d = dim as i32;
    4f64.powi(d) * PI.powi(2 * d) * ((1 + m) as f64).powi(3 * d) / 3.0
}

/// Smallest `q ≥ 2m+1` whose only prime factors are 2, 3 and 5.
pub fn default_grid_size(m: usize) -> usize {
    let mut q = 2 * m + 1;
    loop {
        let mut r = q;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return q;
        }
        q += 1;
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "spatial dimension must be in 1..={MAX_DIM}, got {dim}"
        )));
    }
    Ok(())
}

/// Real coefficients on the truncated tensor basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField", into = "RawField")]
pub struct SpectralField {
    dim: usize,
    m: usize,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawField {
    dim: usize,
    m: usize,
    coeffs: Vec<f64>,
}

impl TryFrom<RawField> for SpectralField {
    type Error = Error;
    fn try_from(raw: RawField) -> Result<Self> {
        SpectralField::from_coeffs(raw.dim, raw.m, raw.coeffs)
    }
}

impl From<SpectralField> for RawField {
    fn from(f: SpectralField) -> Self {
        RawField { dim: f.dim, m: f.m, coeffs: f.coeffs }
    }
}

impl SpectralField {
    pub fn zeros(dim: usize, m: usize) -> Result<Self> {
        check_dim(dim)?;
        if m == 0 {
            return Err(Error::InvalidArgument("truncation m must be positive".into()));
        }
        Ok(Self { dim, m, coeffs: vec![0.0; m.pow(dim as u32)] })
    }

    pub fn from_coeffs(dim: usize, m: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if m == 0 {
            return Err(Error::InvalidArgument("truncation m must be positive".into()));
        }
        let expected = m.pow(dim as u32);
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: coeffs.len() });
        }
        Ok(Self { dim, m, coeffs })
    }

    /// The constant function `c` (its only coefficient sits on the constant mode).
    pub fn constant(dim: usize, m: usize, c: f64) -> Result<Self> {
        let mut f = Self::zeros(dim, m)?;
        f.coeffs[0] = c;
        Ok(f)
    }

    /// A single basis mode with the given coefficient.
    pub fn mode(dim: usize, m: usize, k: &BasisIndex, coeff: f64) -> Result<Self> {
        if k.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: k.dim() });
        }
        let mut f = Self::zeros(dim, m)?;
        let i = k.flat(m)?;
        f.coeffs[i] = coeff;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn coeff(&self, k: &BasisIndex) -> Result<f64> {
        Ok(self.coeffs[k.flat(self.m)?])
    }

    /// `L²(O)` norm, equal to the Euclidean norm of the coefficients.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum())
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.m != other.m {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        Ok(())
    }

    /// `Δf`: each mode scaled by `−Σ_j μ_{k_j}`.
    pub fn laplacian(&self) -> Self {
        let rates = laplacian_rates(self.dim, self.m);
        let coeffs = self.coeffs.iter().zip(&rates).map(|(c, l)| -l * c).collect();
        Self { dim: self.dim, m: self.m, coeffs }
    }

    /// Spectral `∂_θ` in one dimension.
    ///
    /// Sine/cosine pairs of frequency `k` rotate with factor `2πk`. When `m` is even
    /// the last sine mode has no cosine partner inside the truncation and its
    /// derivative is projected away.
    pub fn d_theta(&self) -> Result<Self> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: self.dim });
        }
        let mut out = vec![0.0; self.m];
        d_theta_coeffs(&self.coeffs, &mut out);
        Ok(Self { dim: 1, m: self.m, coeffs: out })
    }

    /// Orthogonal projection onto truncation `m' ≤ m`, kept in the `m` layout.
    pub fn project(&self, m_new: usize) -> Result<Self> {
        if m_new > self.m {
            return Err(Error::InvalidArgument(format!(
                "cannot project truncation {} onto larger truncation {m_new}",
                self.m
            )));
        }
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let k = BasisIndex::from_flat(self.dim, self.m, i);
            if k.components().iter().any(|&kj| kj > m_new) {
                *c = 0.0;
            }
        }
        Ok(out)
    }

    /// Re-express in a different truncation, dropping modes that do not fit and
    /// zero-filling new ones.
    pub fn resize(&self, m_new: usize) -> Result<Self> {
        let mut out = Self::zeros(self.dim, m_new)?;
        for (i, &c) in self.coeffs.iter().enumerate() {
            let k = BasisIndex::from_flat(self.dim, self.m, i);
            if let Ok(j) = k.flat(m_new) {
                out.coeffs[j] = c;
            }
        }
        Ok(out)
    }

    /// Point evaluation `Σ_k c_k e_k(θ)`.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| c * eval_basis(&BasisIndex::from_flat(self.dim, self.m, i), theta))
            .sum()
    }
}

/// Spectral derivative on raw 1-D coefficients (length `m`).
pub(crate) fn d_theta_coeffs(c: &[f64], out: &mut [f64]) {
    let m = c.len();
    out.iter_mut().for_each(|o| *o = 0.0);
    // index j (1-based) -> slot j-1
    let mut k = 1;
    while 2 * k <= m {
        let w = TWO_PI * k as f64;
        let sin_slot = 2 * k - 1;
        let cos_slot = 2 * k;
        let s = c[sin_slot];
        let cc = if cos_slot < m { c[cos_slot] } else { 0.0 };
        out[sin_slot] = -w * cc;
        if cos_slot < m {
            out[cos_slot] = w * s;
        }
        k += 1;
    }
}

/// Values on the uniform grid `θ_p = p/q`, `p = 0..q-1` per axis, lexicographic.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    dim: usize,
    q: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn from_values(dim: usize, q: usize, values: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        let expected = q.pow(dim as u32);
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        Ok(Self { dim, q, values })
    }

    /// Samples `f` at every grid node.
    pub fn sample(dim: usize, q: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        check_dim(dim)?;
        let total = q.pow(dim as u32);
        let mut theta = vec![0.0; dim];
        let values = (0..total)
            .map(|p| {
                grid_point(dim, q, p, &mut theta);
                f(&theta)
            })
            .collect();
        Ok(Self { dim, q, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trapezoid-rule `L²` norm.
    pub fn quadrature_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }
}

/// Coordinates of flat grid node `p`.
pub fn grid_point(dim: usize, q: usize, mut p: usize, theta: &mut [f64]) {
    for slot in theta[..dim].iter_mut().rev() {
        *slot = (p % q) as f64 / q as f64;
        p /= q;
    }
}

/// Precomputed separable transform between coefficients and grid values.
#[derive(Clone, Debug)]
pub struct Transform {
    dim: usize,
    m: usize,
    q: usize,
    /// `table[p * m + (j - 1)] = φ_j(p / q)`
    table: Vec<f64>,
    /// `adjoint[(j - 1) * q + p] = φ_j(p / q) / q`
    adjoint: Vec<f64>,
}

impl Transform {
    pub fn new(dim: usize, m: usize, q: usize) -> Result<Self> {
        check_dim(dim)?;
        if m == 0 {
            return Err(Error::InvalidArgument("truncation m must be positive".into()));
        }
        if q < 2 * m + 1 {
            return Err(Error::Aliasing { q, m });
        }
        let mut table = vec![0.0; q * m];
        let mut adjoint = vec![0.0; q * m];
        for p in 0..q {
            let r = p as f64 / q as f64;
            for j in 1..=m {
                let v = phi(j, r);
                table[p * m + (j - 1)] = v;
                adjoint[(j - 1) * q + p] = v / q as f64;
            }
        }
        Ok(Self { dim, m, q, table, adjoint })
    }

    /// Transform with the default grid size for `m`.
    pub fn with_default_grid(dim: usize, m: usize) -> Result<Self> {
        Self::new(dim, m, default_grid_size(m))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn grid_len(&self) -> usize {
        self.q.pow(self.dim as u32)
    }

    pub fn coeff_len(&self) -> usize {
        self.m.pow(self.dim as u32)
    }

    /// Coefficients to grid values.
    pub fn to_grid_values(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.coeff_len());
        self.tensor_apply(coeffs, &self.table, self.q, self.m)
    }

    /// Grid values to coefficients by trapezoid quadrature.
    pub fn to_spectral_values(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.grid_len());
        self.tensor_apply(values, &self.adjoint, self.m, self.q)
    }

    /// Quadrature `∫ g dθ` of grid values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }

    /// Applies a `rows × cols` matrix along every axis of a `cols^d` tensor.
    fn tensor_apply(&self, input: &[f64], mat: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let mut data = input.to_vec();
        // shape before pass `axis`: rows^axis × cols × cols^(dim-axis-1)
        for axis in 0..self.dim {
            let outer = rows.pow(axis as u32);
            let inner = cols.pow((self.dim - axis - 1) as u32);
            let mut out = vec![0.0; outer * rows * inner];
            for o in 0..outer {
                for r in 0..rows {
                    let mrow = &mat[r * cols..(r + 1) * cols];
                    let dst = &mut out[(o * rows + r) * inner..(o * rows + r + 1) * inner];
                    for (c, &w) in mrow.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let src = &data[(o * cols + c) * inner..(o * cols + c + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
            }
            data = out;
        }
        data
    }
}

/// Evaluates `f` on a `q`-point grid.
pub fn to_grid(f: &SpectralField, q: usize) -> Result<GridField> {
    let t = Transform::new(f.dim, f.m, q)?;
    Ok(GridField { dim: f.dim, q, values: t.to_grid_values(&f.coeffs) })
}

/// Projects grid values onto truncation `m` by exact trigonometric quadrature.
pub fn to_spectral(g: &GridField, m: usize) -> Result<SpectralField> {
    let t = Transform::new(g.dim, m, g.q)?;
    Ok(SpectralField { dim: g.dim, m, coeffs: t.to_spectral_values(&g.values) })
}
