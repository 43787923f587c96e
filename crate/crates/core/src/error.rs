use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by model construction, game assembly, solvers and scenario I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },

    #[error("inconsistent bounds at {location}: lower {lo} is not below upper {hi}")]
    InconsistentBounds { location: String, lo: f64, hi: f64 },

    #[error("price rates differ across prosumers; no exact potential exists")]
    AsymmetricPricing,

    #[error("problem is infeasible (max constraint violation {max_violation:.3e})")]
    Infeasible { max_violation: f64 },

    #[error("solver stopped after {iterations} iterations with residual {residual:.3e}")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("iteration diverged after {iterations} iterations (residual {residual:.3e})")]
    Diverged { iterations: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario validation failed at `{path}`: {reason}")]
    Validation { path: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            got,
        }
    }

    pub(crate) fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than solver failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::InconsistentBounds { .. }
            | Error::Validation { .. } => true,
            Error::AtStep { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
