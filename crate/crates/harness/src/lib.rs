//! Experiment runner for `ldp-core`: versioned JSON configs, one runner per
//! experiment kind, and deterministic CSV/JSON artifacts.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod slope;

use std::path::Path as FsPath;

pub use config::{Experiment, ExperimentConfig, SCHEMA_VERSION};
pub use error::{HarnessError, Result};
pub use output::{Outcome, Table};

/// Runs `cfg` and writes its artifacts under `out`. Returns the outcome; the
/// files are only written once the run has finished.
pub fn run_and_write(cfg: &ExperimentConfig, out: &FsPath) -> Result<Outcome> {
    let outcome = experiments::run(cfg)?;
    output::write_artifacts(out, cfg, &outcome)?;
    Ok(outcome)
}
