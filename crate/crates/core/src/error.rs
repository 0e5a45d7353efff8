use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the fitting pipeline.
#[derive(Debug, Error)]
pub enum GplmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("shape is outside the tangent chart at the pole (distance {distance} >= pi/2)")]
    OutOfChart { distance: f64 },

    #[error("bandwidth {bandwidth} too small: kernel weights vanish at query {query}")]
    BandwidthTooSmall { query: usize, bandwidth: f64 },

    #[error("non-finite geometry between points {i} and {j}")]
    NonFiniteGeometry { i: usize, j: usize },

    #[error("ill-conditioned normal equations in {0}")]
    IllConditioned(String),

    #[error("{model} diverged at iteration {iteration}: |beta| = {beta_norm:e}")]
    Divergence {
        model: &'static str,
        iteration: usize,
        beta_norm: f64,
    },

    #[error("no convergence after {iterations} iterations (gradient trace tail: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("dimension mismatch for specimen {id}: expected {expected}, found {found}")]
    DimensionMismatch {
        id: String,
        expected: String,
        found: String,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GplmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GplmError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GplmError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            GplmError::DegenerateConfiguration(_)
                | GplmError::OutOfChart { .. }
                | GplmError::BandwidthTooSmall { .. }
                | GplmError::NonFiniteGeometry { .. }
                | GplmError::IllConditioned(_)
                | GplmError::Divergence { .. }
                | GplmError::NonConvergence { .. }
                | GplmError::DegenerateDataset(_)
        )
    }
}

pub type Result<T, E = GplmError> = std::result::Result<T, E>;
