use nalgebra::{DMatrix, DVector};

use super::{check_design, check_smoothing_residuals, solve_normal, FitConfig, GplmFit, ModelKind};
use crate::error::{GplmError, Result};
use crate::smoothing::{PairwiseGeometry, SmootherMatrix};

/// Least-squares partially linear fit with a Gaussian response.
///
/// `beta` regresses the smoothing residuals `y - phi0` on `x - phi`; no
/// iteration is involved.
pub fn fit_plm(
    y: &[f64],
    x: &DMatrix<f64>,
    geometry: &dyn PairwiseGeometry,
    cfg: &FitConfig,
) -> Result<GplmFit> {
    cfg.validate()?;
    let n = y.len();
    check_design(n, x, geometry.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GplmError::invalid("responses must be finite"));
    }
    let smoother = SmootherMatrix::build(geometry, &cfg.kernel)?;
    let yv = DMatrix::from_column_slice(n, 1, y);
    let phi0 = smoother.apply(&yv)?;
    let phi = smoother.apply(x)?;
    let xr = x - &phi;
    check_smoothing_residuals(x, &xr)?;
    let yr: DVector<f64> = (&yv - &phi0).column(0).into_owned();
    let beta = solve_normal(xr.transpose() * &xr, xr.transpose() * yr, cfg.ridge, "plm")?;
    let phib = &phi * &beta;
    let g = DMatrix::from_fn(n, 1, |i, _| phi0[(i, 0)] - phib[i]);
    Ok(GplmFit {
        kind: ModelKind::Plm,
        beta,
        phi,
        phi0,
        g,
        z_final: yv,
        x: x.clone(),
        iterations: 1,
        converged: true,
        bandwidth: cfg.kernel.bandwidth,
        irls_variant: cfg.irls_variant,
        trace: Vec::new(),
        clamp_events: 0,
        monotone_repairs: 0,
    })
}
