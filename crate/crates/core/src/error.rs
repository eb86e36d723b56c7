use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("scene parse error in {path}: {message}")]
    SceneParse { path: PathBuf, message: String },

    #[error("malformed output file {path}: {message}")]
    MalformedOutput { path: PathBuf, message: String },

    #[error("invalid scene: {0}")]
    InvalidConfig(String),

    #[error("emitter {index} lies outside the simulation domain: {reason}")]
    EmitterOutsideDomain { index: usize, reason: String },

    #[error("pressure solve did not converge at step {step}: {iterations} iterations, residual {residual:e}")]
    PressureNotConverged {
        step: u64,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite {what} detected at step {step}")]
    NonFinite { step: u64, what: String },

    #[error("cannot compare runs: {0}")]
    MismatchedRuns(String),

    #[error("write failed for {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures caused by the numerics rather than by the input.
    pub fn is_numerical_abort(&self) -> bool {
        matches!(self, Error::PressureNotConverged { .. } | Error::NonFinite { .. })
    }
}
