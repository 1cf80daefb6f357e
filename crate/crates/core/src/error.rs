use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error class, used by the command line front end to report failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Io,
    Numeric,
    Validation,
}

impl std::fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Io => "io",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Validation => "validation",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("bipartiteness violated: edge ({0}, {1}) joins two {2} nodes")]
    NotBipartite(usize, usize, &'static str),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("power iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eigenpair residual {residual:e} exceeds tolerance {tolerance:e}")]
    EigenResidual { residual: f64, tolerance: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Io(_) | Error::Checkpoint(_) => ErrorCategory::Io,
            Error::NonFiniteGradient(_)
            | Error::Numeric(_)
            | Error::NoConvergence { .. }
            | Error::EigenResidual { .. } => ErrorCategory::Numeric,
            Error::Parse { .. }
            | Error::NotBipartite(..)
            | Error::InvalidGraph(_)
            | Error::InvalidLabels(_)
            | Error::Shape(_) => ErrorCategory::Validation,
        }
    }
}
