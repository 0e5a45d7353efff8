use std::f64::consts::PI;

use nalgebra::DVector;

use super::{inv_sinc, ln_sinc, ManifoldBackend, TangentChart};
use crate::error::{GplmError, Result};

/// A point of the unit sphere `S^d`, stored in ambient `R^{d+1}` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint(pub DVector<f64>);

impl SpherePoint {
    pub fn from_slice(values: &[f64]) -> Self {
        Self(DVector::from_column_slice(values))
    }

    /// Point at `(latitude, longitude)` on `S^2`.
    pub fn from_lat_lon(lat: f64, lon: f64) -> Self {
        Self::from_slice(&[lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()])
    }

    pub fn latitude(&self) -> f64 {
        self.0[self.0.len() - 1].clamp(-1.0, 1.0).asin()
    }
}

/// Unit hypersphere `S^d`: geodesic distance `arccos <u, v>`, injectivity radius `pi`
/// and volume density `(sin rho / rho)^(d - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sphere {
    pub dim: usize,
}

const UNIT_TOLERANCE: f64 = 1e-9;

impl Sphere {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(GplmError::invalid("sphere dimension must be >= 1"));
        }
        Ok(Self { dim })
    }

    fn check(&self, p: &SpherePoint) -> Result<()> {
        if p.0.len() != self.dim + 1 {
            return Err(GplmError::invalid(format!(
                "point of length {} on S^{}",
                p.0.len(),
                self.dim
            )));
        }
        let norm = p.0.norm();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GplmError::invalid(format!(
                "sphere point has norm {norm}, expected 1"
            )));
        }
        Ok(())
    }
}

impl ManifoldBackend for Sphere {
    type Point = SpherePoint;

    fn distance(&self, a: &SpherePoint, b: &SpherePoint) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        // arccos of the dot product, in the half-angle form that keeps precision
        // at both 0 and pi
        let diff = (&a.0 - &b.0).norm();
        let sum = (&a.0 + &b.0).norm();
        Ok(2.0 * diff.atan2(sum))
    }

    fn log_density_at(&self, rho: f64) -> f64 {
        (self.dim as f64 - 1.0) * ln_sinc(rho)
    }

    fn injectivity_bound(&self) -> f64 {
        PI
    }
}

impl TangentChart for Sphere {
    /// Karcher mean by fixed-point iteration on the log/exp maps.
    fn intrinsic_mean(&self, points: &[SpherePoint]) -> Result<SpherePoint> {
        let first = points
            .first()
            .ok_or_else(|| GplmError::invalid("mean of an empty point set"))?;
        for p in points {
            self.check(p)?;
        }
        let extrinsic: DVector<f64> = points.iter().map(|p| &p.0).sum();
        let mut mean = if extrinsic.norm() > 1e-12 {
            SpherePoint(extrinsic.normalize())
        } else {
            first.clone()
        };
        for _ in 0..200 {
            let mut step = DVector::zeros(self.dim + 1);
            for p in points {
                step += self.log_map(&mean, p)?;
            }
            step /= points.len() as f64;
            let t = step.norm();
            if t < 1e-14 {
                break;
            }
            mean = SpherePoint((&mean.0 * t.cos() + &step * (t.sin() / t)).normalize());
        }
        Ok(mean)
    }

    fn log_map(&self, pole: &SpherePoint, p: &SpherePoint) -> Result<DVector<f64>> {
        let rho = self.distance(pole, p)?;
        if rho >= PI {
            return Err(GplmError::OutOfChart { distance: rho });
        }
        let cos = pole.0.dot(&p.0);
        Ok((&p.0 - &pole.0 * cos) * inv_sinc(rho))
    }
}
