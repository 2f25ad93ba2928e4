//! Numerical toolkit for small-noise large deviations of stochastic PDEs on the torus.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod format;
pub mod hamiltonians;
pub mod models;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;
pub mod rate;
pub mod semigroup;
pub mod simulator;
pub mod spectral;
pub mod tataru;

pub use error::{Error, Result};
pub use models::{Family, Model, ModelSpec};
pub use spectral::{BasisIndex, GridField, SpectralField, Transform};
