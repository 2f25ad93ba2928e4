use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// The configuration violates a precondition; the message names it.
    #[error("invalid config: {0}")]
    Config(String),

    #[error("cannot access {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    /// A numerical routine failed while the experiment ran.
    #[error(transparent)]
    Core(#[from] ldp_core::Error),
}

impl HarnessError {
    /// Process exit status: 2 for bad input or I/O, 1 for a failed run.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => 2,
            HarnessError::Core(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
