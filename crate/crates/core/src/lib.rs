//! Generalized partially linear models whose nonparametric covariate is a
//! point of a Riemannian manifold, with Kendall's 3D shape space as the main
//! backend.

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod io;
mod linalg;
pub mod models;
pub mod selection;
pub mod smoothing;
pub mod synthetic;

pub use error::{GplmError, Result};
