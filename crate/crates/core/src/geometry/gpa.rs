use nalgebra::DMatrix;

use super::{optimal_rotation, PreShape};
use crate::error::{GplmError, Result};

pub const GPA_TOLERANCE: f64 = 1e-9;
pub const GPA_MAX_ITER: usize = 200;

#[derive(Debug, Clone)]
pub struct GpaOutcome {
    pub mean: PreShape,
    pub iterations: usize,
    pub converged: bool,
    /// Frobenius movement of the mean at the last iteration.
    pub last_shift: f64,
}

/// Full Procrustes mean: minimizes the summed squared full Procrustes
/// distances `sum sin^2(rho_i)`. Seeded at the first shape.
pub fn procrustes_mean(shapes: &[PreShape]) -> Result<PreShape> {
    let first = shapes
        .first()
        .ok_or_else(|| GplmError::invalid("Procrustes mean of an empty list"))?;
    Ok(procrustes_mean_from(shapes, first)?.mean)
}

/// Iterative align / scale / average / renormalize starting from `seed`.
///
/// Each shape is rotated onto the current mean and weighted by `cos(rho_i)`;
/// the fixed point of this map is a stationary point of the objective.
pub fn procrustes_mean_from(shapes: &[PreShape], seed: &PreShape) -> Result<GpaOutcome> {
    if shapes.is_empty() {
        return Err(GplmError::invalid("Procrustes mean of an empty list"));
    }
    let dims = seed.matrix().shape();
    if let Some(bad) = shapes.iter().find(|s| s.matrix().shape() != dims) {
        return Err(GplmError::invalid(format!(
            "inconsistent preshape dimensions {:?} vs {:?}",
            bad.matrix().shape(),
            dims
        )));
    }

    let mut mean = seed.clone();
    let mut last_shift = f64::INFINITY;
    for iteration in 1..=GPA_MAX_ITER {
        let mut acc = DMatrix::zeros(dims.0, dims.1);
        for s in shapes {
            let al = optimal_rotation(&mean, s)?;
            acc += al.aligned * al.sum_lambda;
        }
        let next = PreShape::normalize(acc)?;
        last_shift = (next.matrix() - mean.matrix()).norm();
        mean = next;
        if last_shift < GPA_TOLERANCE {
            return Ok(GpaOutcome {
                mean,
                iterations: iteration,
                converged: true,
                last_shift,
            });
        }
    }
    log::warn!("Procrustes mean did not converge in {GPA_MAX_ITER} iterations (shift {last_shift:e})");
    Ok(GpaOutcome {
        mean,
        iterations: GPA_MAX_ITER,
        converged: false,
        last_shift,
    })
}
