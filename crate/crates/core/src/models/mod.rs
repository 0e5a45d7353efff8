//! Partially linear fits: `response ~ x beta + g(s)` with `g` estimated by
//! kernel smoothing on the manifold, for Gaussian, binary-logit and
//! three-category cumulative-logit responses.

mod logistic;
mod ordinal;
mod plm;

pub use logistic::fit_logistic_plm;
pub use ordinal::{fit_ordinal_plm, ordinal_work_matrices, OrdinalPrediction, OrdinalWorkMatrices};
pub use plm::fit_plm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GplmError, Result};
use crate::geometry::ManifoldBackend;
use crate::smoothing::{normalized_weights, weighted_average, KernelSpec};

/// Coefficients larger than this are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Gaussian response, identity link.
    Plm,
    Logistic,
    Ordinal,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Plm => "plm",
            ModelKind::Logistic => "logistic",
            ModelKind::Ordinal => "ordinal",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = GplmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plm" | "gaussian" => Ok(ModelKind::Plm),
            "logistic" => Ok(ModelKind::Logistic),
            "ordinal" => Ok(ModelKind::Ordinal),
            other => Err(GplmError::invalid(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Working-response convention for the ordinal fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IrlsVariant {
    /// Weight matrix `W_i = Sigma_i^{-1}` and residual scaled by
    /// `diag(gamma_k (1 - gamma_k))`, exactly as printed for three categories.
    #[default]
    Paper,
    /// Multivariate-GLM scoring: `W_i = D Sigma_i^{-1} D`, residual scaled by `D^{-1}`.
    Standard,
}

impl std::str::FromStr for IrlsVariant {
    type Err = GplmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(IrlsVariant::Paper),
            "standard" => Ok(IrlsVariant::Standard),
            other => Err(GplmError::invalid(format!(
                "unknown IRLS variant '{other}' (expected paper|standard)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub kernel: KernelSpec,
    /// Stop once `||beta_new - beta|| / ||beta_new||` falls below this.
    pub threshold: f64,
    pub max_iter: usize,
    /// Ridge added to the diagonal of every normal-equation solve.
    pub ridge: f64,
    /// Probabilities are clamped to `[prob_floor, 1 - prob_floor]`.
    pub prob_floor: f64,
    pub irls_variant: IrlsVariant,
}

impl FitConfig {
    pub fn new(bandwidth: f64) -> Result<Self> {
        Ok(Self {
            kernel: KernelSpec::gaussian(bandwidth)?,
            threshold: 2e-4,
            max_iter: 1000,
            ridge: 1e-8,
            prob_floor: 1e-10,
            irls_variant: IrlsVariant::Paper,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_variant(mut self, variant: IrlsVariant) -> Self {
        self.irls_variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(GplmError::invalid("threshold must be positive"));
        }
        if self.max_iter < 1 {
            return Err(GplmError::invalid("max_iter must be at least 1"));
        }
        if !(self.ridge >= 0.0) {
            return Err(GplmError::invalid("ridge must be nonnegative"));
        }
        if !(self.prob_floor > 0.0 && self.prob_floor < 0.5) {
            return Err(GplmError::invalid("prob_floor must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Fitted state of a partially linear model.
///
/// `q` is 1 for Gaussian and logistic fits and 2 for the ordinal fit.
#[derive(Debug, Clone)]
pub struct GplmFit {
    pub kind: ModelKind,
    pub beta: DVector<f64>,
    /// Smoothed covariates, `n x p`.
    pub phi: DMatrix<f64>,
    /// Smoothed working targets, `n x q`.
    pub phi0: DMatrix<f64>,
    /// `phi0 - phi beta`, `n x q`.
    pub g: DMatrix<f64>,
    /// Working targets of the last iteration, `n x q`.
    pub z_final: DMatrix<f64>,
    /// Training covariates, `n x p`.
    pub x: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub bandwidth: f64,
    pub irls_variant: IrlsVariant,
    /// Relative beta change per iteration.
    pub trace: Vec<f64>,
    /// Number of probabilities that hit the floor during fitting.
    pub clamp_events: usize,
    /// Number of crossed cumulative probabilities sorted during fitting.
    pub monotone_repairs: usize,
}

/// Logistic function, evaluated without overflow for large `|t|`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Reciprocal condition bound below which a ridged normal matrix is rejected.
const MIN_RCOND: f64 = 1e-15;

/// Solves `(A + ridge I) x = b` by Cholesky.
pub(crate) fn solve_normal(
    mut a: DMatrix<f64>,
    b: DVector<f64>,
    ridge: f64,
    context: &str,
) -> Result<DVector<f64>> {
    let p = a.nrows();
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(GplmError::IllConditioned(format!(
            "{context}: non-finite normal equations"
        )));
    }
    for i in 0..p {
        a[(i, i)] += ridge;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| GplmError::IllConditioned(format!("{context}: matrix not positive definite")))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    if !(lo * lo >= MIN_RCOND * hi * hi) {
        return Err(GplmError::IllConditioned(format!(
            "{context}: normal matrix is numerically singular"
        )));
    }
    Ok(chol.solve(&b))
}

/// Rejects covariate columns that the smoother reproduces exactly; their
/// coefficient is not identifiable next to `g`.
pub(crate) fn check_smoothing_residuals(x: &DMatrix<f64>, xr: &DMatrix<f64>) -> Result<()> {
    for j in 0..x.ncols() {
        let scale = x.column(j).norm().max(f64::MIN_POSITIVE);
        if xr.column(j).norm() <= 1e-10 * scale {
            return Err(GplmError::IllConditioned(format!(
                "covariate {j} is absorbed by the nonparametric component"
            )));
        }
    }
    Ok(())
}

pub(crate) fn relative_change(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    let diff = (new - old).norm();
    let norm = new.norm();
    if diff == 0.0 {
        0.0
    } else if norm == 0.0 {
        f64::INFINITY
    } else {
        diff / norm
    }
}

pub(crate) fn check_design(n: usize, x: &DMatrix<f64>, geometry_len: usize) -> Result<()> {
    if x.nrows() != n {
        return Err(GplmError::invalid(format!(
            "covariate matrix has {} rows for {n} responses",
            x.nrows()
        )));
    }
    if geometry_len != n {
        return Err(GplmError::invalid(format!(
            "{geometry_len} manifold points for {n} responses"
        )));
    }
    if x.ncols() == 0 {
        return Err(GplmError::invalid("at least one Euclidean covariate is required"));
    }
    if n <= x.ncols() {
        return Err(GplmError::invalid(format!(
            "need more subjects than covariates (n={n}, p={})",
            x.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GplmError::invalid("covariates must be finite"));
    }
    Ok(())
}

impl GplmFit {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Linear predictors `x_i beta + g(s_i)`, `n x q`.
    pub fn linear_predictors(&self) -> DMatrix<f64> {
        let xb = &self.x * &self.beta;
        DMatrix::from_fn(self.g.nrows(), self.g.ncols(), |i, c| xb[i] + self.g[(i, c)])
    }

    /// Smooths the training `z_final` and `x` with the given normalized weights
    /// and returns `(phi0(s), phi(s))`.
    fn smooth_at(&self, weights: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        if weights.len() != self.n() {
            return Err(GplmError::invalid(format!(
                "{} kernel weights for {} training subjects",
                weights.len(),
                self.n()
            )));
        }
        Ok((weighted_average(weights, &self.z_final), weighted_average(weights, &self.x)))
    }

    fn check_x(&self, x_new: &[f64]) -> Result<DVector<f64>> {
        if x_new.len() != self.beta.len() {
            return Err(GplmError::invalid(format!(
                "new covariate vector has length {}, model has {}",
                x_new.len(),
                self.beta.len()
            )));
        }
        Ok(DVector::from_column_slice(x_new))
    }

    /// Linear predictor(s) at a new point described by its normalized kernel
    /// weights against the training subjects.
    pub fn predict_linear(&self, x_new: &[f64], weights: &[f64]) -> Result<DVector<f64>> {
        let x = self.check_x(x_new)?;
        let (phi0, phi) = self.smooth_at(weights)?;
        let shift = x.dot(&self.beta) - phi.dot(&self.beta);
        Ok(phi0.map(|v| v + shift))
    }

    /// Mean response of a Gaussian fit at a new point.
    pub fn predict_plm(&self, x_new: &[f64], weights: &[f64]) -> Result<f64> {
        self.expect_kind(ModelKind::Plm)?;
        Ok(self.predict_linear(x_new, weights)?[0])
    }

    /// `P(y = 1)` at a new point.
    pub fn predict_logistic(&self, x_new: &[f64], weights: &[f64]) -> Result<f64> {
        self.expect_kind(ModelKind::Logistic)?;
        Ok(sigmoid(self.predict_linear(x_new, weights)?[0]))
    }

    /// Category probabilities and predicted class at a new point.
    pub fn predict_ordinal(&self, x_new: &[f64], weights: &[f64]) -> Result<OrdinalPrediction> {
        self.expect_kind(ModelKind::Ordinal)?;
        let eta = self.predict_linear(x_new, weights)?;
        Ok(OrdinalPrediction::from_linear(eta[0], eta[1]))
    }

    /// Convenience wrapper computing the kernel weights of `s_new` against the
    /// training points first.
    pub fn kernel_weights_at<B: ManifoldBackend>(
        &self,
        backend: &B,
        train_points: &[B::Point],
        s_new: &B::Point,
    ) -> Result<Vec<f64>> {
        if train_points.len() != self.n() {
            return Err(GplmError::invalid("training points do not match the fit"));
        }
        let spec = KernelSpec::gaussian(self.bandwidth)?;
        let pairs = train_points
            .iter()
            .map(|p| {
                let rho = backend.distance(s_new, p)?;
                Ok((rho, backend.log_density_at(rho)))
            })
            .collect::<Result<Vec<_>>>()?;
        normalized_weights(&pairs, &spec, 0)
    }

    /// In-sample probabilities `P(y = 1)` of a logistic fit.
    pub fn fitted_probabilities(&self) -> Vec<f64> {
        self.linear_predictors().column(0).iter().map(|&e| sigmoid(e)).collect()
    }

    /// In-sample category probabilities of an ordinal fit.
    pub fn fitted_ordinal(&self) -> Vec<OrdinalPrediction> {
        let eta = self.linear_predictors();
        (0..eta.nrows())
            .map(|i| OrdinalPrediction::from_linear(eta[(i, 0)], eta[(i, 1)]))
            .collect()
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(GplmError::invalid(format!(
                "{} prediction requested from a {} fit",
                kind.name(),
                self.kind.name()
            )));
        }
        Ok(())
    }
}
