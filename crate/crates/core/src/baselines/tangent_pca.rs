use nalgebra::{DMatrix, DVector};

use crate::error::{GplmError, Result};
use crate::geometry::TangentChart;
use crate::linalg::thin_svd;

/// Principal components of tangent coordinates at the intrinsic mean.
#[derive(Debug, Clone)]
pub struct TangentPcaModel<P> {
    pub pole: P,
    /// Mean of the training tangent coordinates.
    pub center: DVector<f64>,
    /// Orthonormal loadings, one column per component, by decreasing variance.
    pub components: DMatrix<f64>,
    /// Sample variances (divisor `n - 1`) of each component.
    pub variances: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// Smallest number of leading components reaching the variance threshold.
    pub retained: usize,
}

impl<P> TangentPcaModel<P> {
    pub fn cumulative_explained(&self, q: usize) -> f64 {
        self.explained_ratio.iter().take(q).sum()
    }

    /// Scores of tangent coordinates on the first `q` components.
    pub fn scores_of(&self, coords: &DVector<f64>, q: usize) -> DVector<f64> {
        let centered = coords - &self.center;
        self.components.columns(0, q).transpose() * centered
    }

    /// Tangent coordinates rebuilt from scores on the first `scores.len()` components.
    pub fn reconstruct(&self, scores: &DVector<f64>) -> DVector<f64> {
        &self.center + self.components.columns(0, scores.len()) * scores
    }

    /// Scores of a new point on the retained components.
    pub fn project<C: TangentChart<Point = P>>(&self, chart: &C, point: &P) -> Result<DVector<f64>> {
        let coords = chart.log_map(&self.pole, point)?;
        if coords.len() != self.center.len() {
            return Err(GplmError::invalid("point dimension differs from the PCA model"));
        }
        Ok(self.scores_of(&coords, self.retained))
    }
}

/// Number of leading components whose cumulative ratio reaches `threshold`.
fn retained_count(ratios: &[f64], threshold: f64) -> usize {
    let mut acc = 0.0;
    for (q, r) in ratios.iter().enumerate() {
        if acc >= threshold - 1e-12 {
            return q;
        }
        acc += r;
    }
    ratios.len()
}

/// Tangent-space PCA: pole at the intrinsic mean, coordinates by the inverse
/// exponential map, sample-covariance PCA of the centered coordinates.
///
/// Returns the model and the `n x retained` training score matrix.
pub fn tangent_pca<C: TangentChart>(
    chart: &C,
    points: &[C::Point],
    var_threshold: f64,
) -> Result<(TangentPcaModel<C::Point>, DMatrix<f64>)> {
    let n = points.len();
    if n < 2 {
        return Err(GplmError::invalid(format!("tangent PCA needs n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&var_threshold) {
        return Err(GplmError::invalid(format!(
            "variance threshold must lie in [0, 1], got {var_threshold}"
        )));
    }
    let pole = chart.intrinsic_mean(points)?;
    let coords = points
        .iter()
        .map(|p| chart.log_map(&pole, p))
        .collect::<Result<Vec<_>>>()?;
    let d = coords[0].len();
    let data = DMatrix::from_fn(n, d, |i, j| coords[i][j]);
    let center = DVector::from_fn(d, |j, _| data.column(j).mean());
    let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - center[j]);

    let svd = thin_svd(&centered, "tangent PCA")?;
    let mut order: Vec<usize> = (0..svd.sigma.len()).collect();
    order.sort_by(|&a, &b| svd.sigma[b].total_cmp(&svd.sigma[a]));

    let r = order.len();
    let mut components = DMatrix::zeros(d, r);
    let mut variances = Vec::with_capacity(r);
    for (c, &idx) in order.iter().enumerate() {
        let mut loading: DVector<f64> = svd.v.column(idx).into_owned();
        let lead = loading.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if lead < 0.0 {
            loading.neg_mut();
        }
        components.set_column(c, &loading);
        variances.push(svd.sigma[idx].powi(2) / (n - 1) as f64);
    }
    let total: f64 = variances.iter().sum();
    let explained_ratio: Vec<f64> = if total > 0.0 {
        variances.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; r]
    };
    let retained = if total > 0.0 {
        retained_count(&explained_ratio, var_threshold)
    } else {
        0
    };
    let model = TangentPcaModel {
        pole,
        center,
        components,
        variances,
        explained_ratio,
        retained,
    };
    let scores = DMatrix::from_fn(n, retained, |i, c| {
        model.components.column(c).dot(&(&coords[i] - &model.center))
    });
    Ok((model, scores))
}
