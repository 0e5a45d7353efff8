//! Kernel regression on a manifold: each estimate is a weighted average of
//! targets with weights `K_h(rho) / theta`, accumulated in the log domain.

mod geometry;

pub use geometry::{LiveGeometry, PairwiseGeometry, SmootherCache, Subset};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GplmError, Result};
use crate::geometry::ManifoldBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Bandwidth in radians.
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(GplmError::invalid(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Gaussian,
            bandwidth,
        })
    }

    /// Logs a warning when the bandwidth exceeds the backend's injectivity bound.
    pub fn check_against<B: ManifoldBackend>(&self, backend: &B) -> bool {
        let ok = self.bandwidth <= backend.injectivity_bound();
        if !ok {
            log::warn!(
                "bandwidth {} exceeds injectivity bound {}",
                self.bandwidth,
                backend.injectivity_bound()
            );
        }
        ok
    }

    /// Log of the unnormalized kernel at distance `d`.
    pub fn log_weight(&self, d: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => -d * d / (2.0 * self.bandwidth * self.bandwidth),
        }
    }
}

/// Unnormalized kernel `exp(-d^2 / (2 h^2))`; constants cancel in the ratio.
pub fn kernel_weight(d: f64, spec: &KernelSpec) -> f64 {
    spec.log_weight(d).exp()
}

/// Turns `(rho_i, log theta_i)` pairs into normalized estimator weights.
///
/// `log w_i = -log theta_i + log K_h(rho_i)`, shifted by the maximum before
/// exponentiating.
pub fn normalized_weights(
    pairs: &[(f64, f64)],
    spec: &KernelSpec,
    query: usize,
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(GplmError::invalid("kernel estimate over an empty sample"));
    }
    let mut log_w = Vec::with_capacity(pairs.len());
    for (j, &(rho, log_theta)) in pairs.iter().enumerate() {
        let lw = spec.log_weight(rho) - log_theta;
        if lw.is_nan() || lw == f64::INFINITY {
            return Err(GplmError::NonFiniteGeometry { i: query, j });
        }
        log_w.push(lw);
    }
    let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(GplmError::BandwidthTooSmall {
            query,
            bandwidth: spec.bandwidth,
        });
    }
    let mut w: Vec<f64> = log_w.iter().map(|lw| (lw - shift).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(GplmError::BandwidthTooSmall {
            query,
            bandwidth: spec.bandwidth,
        });
    }
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

/// `sum_i w_i t_i` per column, evaluated as `t_a + sum_i w_i (t_i - t_a)` with
/// `a` the heaviest point. Weights summing to one up to rounding then still
/// reproduce constant targets bit for bit.
pub fn weighted_average(weights: &[f64], targets: &DMatrix<f64>) -> DVector<f64> {
    let anchor = weights
        .iter()
        .enumerate()
        .fold(0, |best, (i, &w)| if w > weights[best] { i } else { best });
    DVector::from_fn(targets.ncols(), |c, _| {
        let base = targets[(anchor, c)];
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w * (targets[(i, c)] - base);
        }
        base + acc
    })
}

fn check_targets(targets: &DMatrix<f64>, n: usize) -> Result<()> {
    if targets.nrows() != n {
        return Err(GplmError::invalid(format!(
            "targets have {} rows for {n} points",
            targets.nrows()
        )));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(GplmError::invalid("targets must be finite"));
    }
    Ok(())
}

/// Kernel estimate at an arbitrary point of the manifold, column-wise over the
/// `n x q` target matrix.
pub fn pelletier_estimate<B: ManifoldBackend>(
    query: &B::Point,
    points: &[B::Point],
    targets: &DMatrix<f64>,
    spec: &KernelSpec,
    backend: &B,
) -> Result<DVector<f64>> {
    check_targets(targets, points.len())?;
    let pairs = points
        .iter()
        .map(|p| {
            let rho = backend.distance(query, p)?;
            Ok((rho, backend.log_density_at(rho)))
        })
        .collect::<Result<Vec<_>>>()?;
    let w = normalized_weights(&pairs, spec, 0)?;
    Ok(weighted_average(&w, targets))
}

/// Normalized weights of geometry point `query` against the points `train`
/// of the same geometry.
pub fn kernel_row(
    geometry: &dyn PairwiseGeometry,
    query: usize,
    train: &[usize],
    spec: &KernelSpec,
) -> Result<Vec<f64>> {
    let pairs = train
        .iter()
        .map(|&j| geometry.pair(query, j))
        .collect::<Result<Vec<_>>>()?;
    normalized_weights(&pairs, spec, query)
}

/// Row-stochastic matrix `S` with `(S t)_i` the kernel estimate at point `i`.
/// Every point is included in its own estimate.
#[derive(Debug, Clone)]
pub struct SmootherMatrix {
    weights: DMatrix<f64>,
}

const PARALLEL_MIN_POINTS: usize = 128;

impl SmootherMatrix {
    pub fn build(geometry: &dyn PairwiseGeometry, spec: &KernelSpec) -> Result<Self> {
        let n = geometry.len();
        if n == 0 {
            return Err(GplmError::invalid("smoother over an empty sample"));
        }
        let train: Vec<usize> = (0..n).collect();
        let row = |i: usize| kernel_row(geometry, i, &train, spec);
        let rows: Vec<Vec<f64>> = if n >= PARALLEL_MIN_POINTS {
            (0..n).into_par_iter().map(row).collect::<Result<_>>()?
        } else {
            (0..n).map(row).collect::<Result<_>>()?
        };
        let weights = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn apply(&self, targets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_targets(targets, self.len())?;
        let mut out = DMatrix::zeros(self.len(), targets.ncols());
        for (i, row) in self.weights.row_iter().enumerate() {
            let w: Vec<f64> = row.iter().copied().collect();
            out.set_row(i, &weighted_average(&w, targets).transpose());
        }
        Ok(out)
    }
}

/// Kernel estimates at every sample point.
pub fn smooth_all(
    geometry: &dyn PairwiseGeometry,
    targets: &DMatrix<f64>,
    spec: &KernelSpec,
) -> Result<DMatrix<f64>> {
    check_targets(targets, geometry.len())?;
    SmootherMatrix::build(geometry, spec)?.apply(targets)
}
