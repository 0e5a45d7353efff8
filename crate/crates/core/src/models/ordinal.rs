use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;

use super::{
    check_design, check_smoothing_residuals, logit, relative_change, sigmoid, solve_normal, FitConfig, GplmFit, IrlsVariant,
    ModelKind, DIVERGENCE_NORM,
};
use crate::error::{GplmError, Result};
use crate::smoothing::{PairwiseGeometry, SmootherMatrix};

/// Per-subject IRLS matrices of the three-category cumulative-logit model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrdinalWorkMatrices {
    /// `(1/pi2) [[(1-pi3)/pi1, -1], [-1, (1-pi1)/pi3]]`, the inverse covariance
    /// of the indicators `(1{y<=1}, 1{y<=2})`, evaluated as
    /// `[[1/pi1 + 1/pi2, -1/pi2], [-1/pi2, 1/pi2 + 1/pi3]]`.
    pub w: Matrix2<f64>,
    /// `diag(pi1 (1-pi1), pi3 (1-pi3))`, i.e. `diag(gamma_k (1 - gamma_k))`,
    /// with each complement summed from the other two probabilities.
    pub dinv: Matrix2<f64>,
    /// Category probabilities after clamping.
    pub probs: [f64; 3],
    /// Set when any probability was moved onto the floor.
    pub clamped: bool,
}

/// Work matrices from category probabilities summing to one; entries below
/// `eps` (or above `1 - eps`) are clamped and flagged.
pub fn ordinal_work_matrices(probs: [f64; 3], eps: f64) -> Result<OrdinalWorkMatrices> {
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(GplmError::invalid("category probabilities must be finite"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(GplmError::invalid(format!(
            "category probabilities sum to {total}, expected 1"
        )));
    }
    let mut clamped = false;
    let [p1, p2, p3] = probs.map(|p| {
        let c = p.clamp(eps, 1.0 - eps);
        clamped |= c != p;
        c
    });
    // Sums of reciprocals and complements built from the other probabilities
    // avoid cancelling against one.
    let (r1, r2, r3) = (1.0 / p1, 1.0 / p2, 1.0 / p3);
    let w = Matrix2::new(r1 + r2, -r2, -r2, r2 + r3);
    let dinv = Matrix2::new(p1 * (p2 + p3), 0.0, 0.0, p3 * (p1 + p2));
    Ok(OrdinalWorkMatrices {
        w,
        dinv,
        probs: [p1, p2, p3],
        clamped,
    })
}

/// Probabilities closer than this count as tied; ties go to the lower category.
const ARGMAX_TIE: f64 = 1e-12;

/// Category probabilities and the most probable category (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrdinalPrediction {
    pub probs: [f64; 3],
    pub class: u8,
    /// Set when the cumulative probabilities had to be sorted.
    pub repaired: bool,
}

impl OrdinalPrediction {
    pub fn from_linear(eta1: f64, eta2: f64) -> Self {
        let (mut g1, mut g2) = (sigmoid(eta1), sigmoid(eta2));
        let repaired = g1 > g2;
        if repaired {
            std::mem::swap(&mut g1, &mut g2);
        }
        let probs = [g1, g2 - g1, 1.0 - g2];
        let mut class = 0;
        for k in 1..3 {
            if probs[k] > probs[class] + ARGMAX_TIE {
                class = k;
            }
        }
        Self {
            probs,
            class: class as u8 + 1,
            repaired,
        }
    }
}

fn ordinal_labels(y: &[f64]) -> Result<[usize; 3]> {
    let mut counts = [0usize; 3];
    for &v in y {
        match v {
            v if v == 1.0 => counts[0] += 1,
            v if v == 2.0 => counts[1] += 1,
            v if v == 3.0 => counts[2] += 1,
            v if v.fract() == 0.0 && v > 3.0 => {
                return Err(GplmError::Unsupported(format!(
                    "ordinal fits support exactly three categories, found label {v}"
                )))
            }
            other => {
                return Err(GplmError::invalid(format!(
                    "ordinal response must be 1, 2 or 3, found {other}"
                )))
            }
        }
    }
    if counts.contains(&0) {
        return Err(GplmError::DegenerateDataset(format!(
            "ordinal fit needs all three categories present, counts {counts:?}"
        )));
    }
    Ok(counts)
}

/// Three-category proportional-odds partially linear model.
///
/// The working response is two-dimensional per subject; both columns are
/// smoothed without weights and `beta` is shared across the cumulative logits.
/// `cfg.irls_variant` selects the printed three-category matrices or the
/// multivariate-GLM scoring step.
pub fn fit_ordinal_plm(
    y: &[f64],
    x: &DMatrix<f64>,
    geometry: &dyn PairwiseGeometry,
    cfg: &FitConfig,
) -> Result<GplmFit> {
    cfg.validate()?;
    let n = y.len();
    check_design(n, x, geometry.len())?;
    let counts = ordinal_labels(y)?;
    let p = x.ncols();
    let eps = cfg.prob_floor;

    let smoother = SmootherMatrix::build(geometry, &cfg.kernel)?;
    let phi = smoother.apply(x)?;
    let xr = x - &phi;
    check_smoothing_residuals(x, &xr)?;
    let indicators: Vec<Vector2<f64>> = y
        .iter()
        .map(|&v| Vector2::new((v <= 1.0) as u8 as f64, (v <= 2.0) as u8 as f64))
        .collect();

    let c1 = counts[0] as f64 / n as f64;
    let c2 = (counts[0] + counts[1]) as f64 / n as f64;
    let mut phi0 = DMatrix::from_fn(n, 2, |_, c| if c == 0 { logit(c1) } else { logit(c2) });
    let mut beta = DVector::zeros(p);
    let mut z = DMatrix::zeros(n, 2);
    let mut trace = Vec::new();
    let mut clamp_events = 0;
    let mut monotone_repairs = 0;
    let mut converged = false;

    for iter in 1..=cfg.max_iter {
        let shift = &xr * &beta;
        let mut s = DVector::zeros(n);
        let mut t_w = Vec::with_capacity(n);
        for i in 0..n {
            let eta = Vector2::new(shift[i] + phi0[(i, 0)], shift[i] + phi0[(i, 1)]);
            let (mut g1, mut g2) = (sigmoid(eta[0]), sigmoid(eta[1]));
            if g1 > g2 {
                // Crossed cumulative logits leave W indefinite; sort as prediction does.
                std::mem::swap(&mut g1, &mut g2);
                monotone_repairs += 1;
            }
            let m = ordinal_work_matrices([g1, g2 - g1, 1.0 - g2], eps)?;
            if m.clamped {
                clamp_events += 1;
            }
            let gamma = Vector2::new(m.probs[0], 1.0 - m.probs[2]);
            let resid = indicators[i] - gamma;
            let d = m.dinv;
            let (w, zi) = match cfg.irls_variant {
                IrlsVariant::Paper => (m.w, eta + d.transpose() * resid),
                IrlsVariant::Standard => (
                    d * m.w * d.transpose(),
                    eta + Vector2::new(resid[0] / d[(0, 0)], resid[1] / d[(1, 1)]),
                ),
            };
            z[(i, 0)] = zi[0];
            z[(i, 1)] = zi[1];
            s[i] = w.sum();
            t_w.push(w);
        }
        let phi0_new = smoother.apply(&z)?;
        let t = DVector::from_fn(n, |i, _| {
            let r = Vector2::new(z[(i, 0)] - phi0_new[(i, 0)], z[(i, 1)] - phi0_new[(i, 1)]);
            (t_w[i] * r).sum()
        });
        let xs = DMatrix::from_fn(n, p, |i, j| xr[(i, j)] * s[i]);
        let beta_new = solve_normal(
            xs.transpose() * &xr,
            xr.transpose() * t,
            cfg.ridge,
            "ordinal plm",
        )?;
        let beta_norm = beta_new.norm();
        if !beta_norm.is_finite() || beta_norm > DIVERGENCE_NORM {
            return Err(GplmError::Divergence {
                model: "ordinal",
                iteration: iter,
                beta_norm,
            });
        }
        let e = relative_change(&beta_new, &beta);
        trace.push(e);
        log::debug!("ordinal plm iteration {iter}: e = {e:.3e}");
        beta = beta_new;
        phi0 = phi0_new;
        if e < cfg.threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "ordinal plm stopped at max_iter={} without reaching threshold {}",
            cfg.max_iter,
            cfg.threshold
        );
    }

    let phib = &phi * &beta;
    let g = DMatrix::from_fn(n, 2, |i, c| phi0[(i, c)] - phib[i]);
    Ok(GplmFit {
        kind: ModelKind::Ordinal,
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
        monotone_repairs,
    })
}
