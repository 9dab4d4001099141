use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("covariance is degenerate after {attempts} jitter attempts (trace = {trace})")]
    DegenerateCovariance { attempts: usize, trace: f64 },

    #[error("finite-difference stencil leaves the prior box in coordinate {coordinate}")]
    Boundary { coordinate: usize },

    #[error("chain {chain}: {reason}")]
    Initialization { chain: usize, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the numerics rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. }
                | Error::DegenerateCovariance { .. }
                | Error::Boundary { .. }
                | Error::Initialization { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
