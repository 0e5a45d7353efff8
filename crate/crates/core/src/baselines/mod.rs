//! Comparison path without manifold smoothing: tangent-space PCA scores fed to
//! a plain proportional-odds model.

mod cumulative_logit;
mod tangent_pca;

pub use cumulative_logit::{fit_cumulative_logit, CumulativeLogitFit};
pub use tangent_pca::{tangent_pca, TangentPcaModel};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{GplmError, Result};
use crate::geometry::TangentChart;
use crate::selection::{subject_folds, CvPrediction, CvReport, FoldIssue};

/// Default share of tangent-space variance kept by the PCA step.
pub const DEFAULT_VAR_THRESHOLD: f64 = 0.98;

/// Inputs of the baseline: manifold points, ordered labels and the fixed
/// covariates, which precede the PCA scores in the design.
pub struct BaselineProblem<'a, C: TangentChart> {
    pub chart: &'a C,
    pub points: &'a [C::Point],
    pub y: &'a [f64],
    pub covariates: &'a DMatrix<f64>,
    pub groups: Option<&'a [usize]>,
    pub var_threshold: f64,
}

/// Training-fold state of the baseline.
pub struct BaselineFit<P> {
    pub pca: TangentPcaModel<P>,
    pub logit: CumulativeLogitFit,
    /// Original label of each 1-based category.
    pub labels: Vec<i64>,
}

impl<'a, C: TangentChart> BaselineProblem<'a, C> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn validate(&self) -> Result<Vec<i64>> {
        let n = self.n();
        if self.points.len() != n || self.covariates.nrows() != n {
            return Err(GplmError::invalid(format!(
                "baseline inputs disagree: {n} responses, {} points, {} covariate rows",
                self.points.len(),
                self.covariates.nrows()
            )));
        }
        if self.groups.is_some_and(|g| g.len() != n) {
            return Err(GplmError::invalid("one group id per row is required"));
        }
        let mut labels = Vec::new();
        for &v in self.y {
            if v.fract() != 0.0 || !v.is_finite() {
                return Err(GplmError::invalid(format!("baseline label {v} is not an integer")));
            }
            labels.push(v as i64);
        }
        labels.sort_unstable();
        labels.dedup();
        if labels.len() < 2 {
            return Err(GplmError::DegenerateDataset("baseline needs at least two classes".into()));
        }
        Ok(labels)
    }

    fn design_row(&self, row: usize, scores: &[f64]) -> Vec<f64> {
        self.covariates
            .row(row)
            .iter()
            .copied()
            .chain(scores.iter().copied())
            .collect()
    }

    /// Fits PCA and the cumulative logit on the rows `train` only.
    pub fn fit_rows(&self, train: &[usize], labels: &[i64]) -> Result<BaselineFit<C::Point>> {
        let pts: Vec<C::Point> = train.iter().map(|&i| self.points[i].clone()).collect();
        let (pca, scores) = tangent_pca(self.chart, &pts, self.var_threshold)?;
        let p0 = self.covariates.ncols();
        let design = DMatrix::from_fn(train.len(), p0 + pca.retained, |r, c| {
            if c < p0 {
                self.covariates[(train[r], c)]
            } else {
                scores[(r, c - p0)]
            }
        });
        let y: Vec<usize> = train
            .iter()
            .map(|&i| labels.iter().position(|&l| l == self.y[i] as i64).map(|c| c + 1))
            .collect::<Option<_>>()
            .ok_or_else(|| GplmError::invalid("training label outside the class list"))?;
        let logit = fit_cumulative_logit(&y, &design)?;
        Ok(BaselineFit {
            pca,
            logit,
            labels: labels.to_vec(),
        })
    }

    /// Predicted label and category probabilities of row `row`.
    pub fn predict_row(&self, fit: &BaselineFit<C::Point>, row: usize) -> Result<(i64, Vec<f64>)> {
        let scores = fit.pca.project(self.chart, &self.points[row])?;
        let x = self.design_row(row, scores.as_slice());
        let probs = fit.logit.probabilities(&x)?;
        let class = fit.logit.predict(&x)?;
        Ok((fit.labels[class - 1], probs))
    }
}

/// Leave-one-subject-out cross-validation of the baseline. Pole and
/// components are recomputed inside every fold.
pub fn baseline_loocv<C: TangentChart>(problem: &BaselineProblem<'_, C>) -> Result<CvReport> {
    let labels = problem.validate()?;
    let folds = subject_folds(problem.n(), problem.groups);
    if folds.len() < 3 {
        return Err(GplmError::invalid(format!(
            "cross-validation needs at least 3 subjects, got {}",
            folds.len()
        )));
    }
    let outcomes: Vec<Result<std::result::Result<Vec<CvPrediction>, (bool, FoldIssue)>>> = folds
        .par_iter()
        .map(|(group, test)| {
            let train: Vec<usize> = (0..problem.n()).filter(|i| !test.contains(i)).collect();
            let missing: Vec<i64> = labels
                .iter()
                .copied()
                .filter(|&l| !train.iter().any(|&i| problem.y[i] as i64 == l))
                .collect();
            if !missing.is_empty() {
                return Ok(Err((
                    true,
                    FoldIssue {
                        group: *group,
                        reason: format!("training rows miss classes {missing:?}"),
                    },
                )));
            }
            let attempt = || -> Result<Vec<CvPrediction>> {
                let fit = problem.fit_rows(&train, &labels)?;
                test.iter()
                    .map(|&row| {
                        let (predicted, probs) = problem.predict_row(&fit, row)?;
                        Ok(CvPrediction {
                            row,
                            group: *group,
                            truth: problem.y[row] as i64,
                            predicted,
                            probs,
                        })
                    })
                    .collect()
            };
            match attempt() {
                Ok(p) => Ok(Ok(p)),
                Err(e) if e.is_numerical() => {
                    log::warn!("baseline fold {group}: {e}");
                    Ok(Err((
                        false,
                        FoldIssue {
                            group: *group,
                            reason: e.to_string(),
                        },
                    )))
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let (mut predictions, mut skipped, mut failed) = (Vec::new(), Vec::new(), Vec::new());
    for outcome in outcomes {
        match outcome? {
            Ok(p) => predictions.extend(p),
            Err((true, issue)) => skipped.push(issue),
            Err((false, issue)) => failed.push(issue),
        }
    }
    CvReport::assemble("baseline", None, labels, predictions, skipped, failed, 0)
}
