use nalgebra::{DMatrix, DVector};

use super::{
    check_design, check_smoothing_residuals, relative_change, sigmoid, solve_normal, FitConfig, GplmFit, ModelKind,
    DIVERGENCE_NORM,
};
use crate::error::{GplmError, Result};
use crate::smoothing::{PairwiseGeometry, SmootherMatrix};

/// Starting value of `phi0` at every sample point.
const PHI0_INIT: f64 = -0.5;

fn binary_labels(y: &[f64]) -> Result<()> {
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(GplmError::invalid(format!(
            "logistic response must be 0 or 1, found {bad}"
        )));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(GplmError::DegenerateDataset(
            "logistic fit needs both classes present".into(),
        ));
    }
    Ok(())
}

/// Logistic partially linear model by backfitting IRLS.
///
/// Each iteration forms the working response
/// `z = eta + (y - p) / (p (1 - p))`, smooths it without weights to update
/// `phi0`, and solves the weighted normal equations for `beta` on the
/// smoothing residuals.
pub fn fit_logistic_plm(
    y: &[f64],
    x: &DMatrix<f64>,
    geometry: &dyn PairwiseGeometry,
    cfg: &FitConfig,
) -> Result<GplmFit> {
    cfg.validate()?;
    let n = y.len();
    check_design(n, x, geometry.len())?;
    binary_labels(y)?;
    let p = x.ncols();
    let eps = cfg.prob_floor;

    let smoother = SmootherMatrix::build(geometry, &cfg.kernel)?;
    let phi = smoother.apply(x)?;
    let xr = x - &phi;
    check_smoothing_residuals(x, &xr)?;

    let mut beta = DVector::zeros(p);
    let mut phi0 = DMatrix::from_element(n, 1, PHI0_INIT);
    let mut z = DMatrix::zeros(n, 1);
    let mut trace = Vec::new();
    let mut clamp_events = 0;
    let mut converged = false;

    for iter in 1..=cfg.max_iter {
        // eta = x beta + g = (x - phi) beta + phi0
        let eta = &xr * &beta + phi0.column(0);
        let mut w = DVector::zeros(n);
        for i in 0..n {
            let raw = sigmoid(eta[i]);
            let pi = raw.clamp(eps, 1.0 - eps);
            if pi != raw {
                clamp_events += 1;
            }
            w[i] = pi * (1.0 - pi);
            z[(i, 0)] = eta[i] + (y[i] - pi) / w[i];
        }
        let phi0_new = smoother.apply(&z)?;
        let resid = z.column(0) - phi0_new.column(0);
        let xw = DMatrix::from_fn(n, p, |i, j| xr[(i, j)] * w[i]);
        let beta_new = solve_normal(
            xw.transpose() * &xr,
            xw.transpose() * resid,
            cfg.ridge,
            "logistic plm",
        )?;
        let beta_norm = beta_new.norm();
        if !beta_norm.is_finite() || beta_norm > DIVERGENCE_NORM {
            return Err(GplmError::Divergence {
                model: "logistic",
                iteration: iter,
                beta_norm,
            });
        }
        let e = relative_change(&beta_new, &beta);
        trace.push(e);
        log::debug!("logistic plm iteration {iter}: e = {e:.3e}");
        beta = beta_new;
        phi0 = phi0_new;
        if e < cfg.threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "logistic plm stopped at max_iter={} without reaching threshold {}",
            cfg.max_iter,
            cfg.threshold
        );
    }

    let phib = &phi * &beta;
    let g = DMatrix::from_fn(n, 1, |i, _| phi0[(i, 0)] - phib[i]);
    Ok(GplmFit {
        kind: ModelKind::Logistic,
        beta,
        phi,
        phi0,
        g,
        z_final: z,
        x: x.clone(),
        iterations: trace.len(),
        converged,
        bandwidth: cfg.kernel.bandwidth,
        irls_variant: cfg.irls_variant,
        trace,
        clamp_events,
        monotone_repairs: 0,
    })
}
