//! Shape-space geometry: configuration matrices, preshapes, the Procrustes
//! distance and volume density of Kendall's shape space, and a unit-sphere
//! backend used as a test manifold.

mod configuration;
mod gpa;
mod kendall;
mod sphere;

pub use configuration::{
    centroid_size, helmert_submatrix, preshape, Configuration, PreShape, ShapeSample,
};
pub use gpa::{procrustes_mean, procrustes_mean_from, GpaOutcome, GPA_MAX_ITER, GPA_TOLERANCE};
pub use kendall::{
    exp_map, log_volume_density, optimal_rotation, procrustes_distance,
    procrustes_distance_by_eigenvalues, tangent_coordinates,
    volume_density_exponent, Alignment, KendallShapeSpace,
};
pub use sphere::{Sphere, SpherePoint};

use nalgebra::DVector;

use crate::error::Result;

/// A Riemannian manifold on which the kernel estimator can operate.
///
/// Both shipped backends have a volume density that depends only on the
/// geodesic distance, so implementors supply it as a function of `rho`.
pub trait ManifoldBackend: Send + Sync {
    type Point: Clone + Send + Sync;

    /// Geodesic distance in radians.
    fn distance(&self, a: &Self::Point, b: &Self::Point) -> Result<f64>;

    /// Log of the volume density at geodesic distance `rho` from the base point.
    fn log_density_at(&self, rho: f64) -> f64;

    /// Upper bound on the injectivity radius; bandwidths above it only warn.
    fn injectivity_bound(&self) -> f64;

    fn log_volume_density(&self, a: &Self::Point, b: &Self::Point) -> Result<f64> {
        Ok(self.log_density_at(self.distance(a, b)?))
    }
}

/// Backends with a usable tangent-space chart (intrinsic mean + inverse
/// exponential map). Tangent vectors are returned in ambient coordinates.
pub trait TangentChart: ManifoldBackend {
    fn intrinsic_mean(&self, points: &[Self::Point]) -> Result<Self::Point>;

    /// Coordinates of `p` in the tangent space at `pole`; the norm equals the
    /// geodesic distance between them.
    fn log_map(&self, pole: &Self::Point, p: &Self::Point) -> Result<DVector<f64>>;
}

/// `ln(sin(rho) / rho)`, exact at zero and `-inf` once `sin(rho) <= 0`.
pub(crate) fn ln_sinc(rho: f64) -> f64 {
    if rho == 0.0 {
        0.0
    } else if rho.abs() < 1e-6 {
        let r2 = rho * rho;
        -r2 / 6.0 - r2 * r2 / 180.0
    } else {
        let s = rho.sin();
        if s <= 0.0 {
            f64::NEG_INFINITY
        } else {
            (s / rho).ln()
        }
    }
}

/// `rho / sin(rho)`, evaluated by series near zero.
pub(crate) fn inv_sinc(rho: f64) -> f64 {
    if rho.abs() < 1e-6 {
        1.0 + rho * rho / 6.0
    } else {
        rho / rho.sin()
    }
}

/// Geodesic angle from `1 - cos(rho)`, accurate at both ends of `[0, pi/2]`.
pub(crate) fn angle_from_one_minus_cos(one_minus_cos: f64) -> f64 {
    let omc = one_minus_cos.clamp(0.0, 1.0);
    let sin = (omc * (2.0 - omc)).sqrt();
    sin.atan2(1.0 - omc)
}
