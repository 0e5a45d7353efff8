//! Leave-one-out cross-validation and bandwidth sweeps.
//!
//! A fold holds out every row of one subject. The training fit only sees the
//! remaining rows, through an index view of the shared pairwise geometry, so
//! the cache is computed once for a whole sweep.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GplmError, Result};
use crate::models::{
    fit_logistic_plm, fit_ordinal_plm, FitConfig, GplmFit, ModelKind, OrdinalPrediction,
};
use crate::smoothing::{kernel_row, KernelSpec, PairwiseGeometry, Subset};

/// Rows of a supervised problem sharing one pairwise geometry.
#[derive(Clone, Copy)]
pub struct CvProblem<'a> {
    pub y: &'a [f64],
    pub x: &'a DMatrix<f64>,
    pub geometry: &'a dyn PairwiseGeometry,
    /// Subject of each row; rows of one subject are held out together.
    /// `None` means one subject per row.
    pub groups: Option<&'a [usize]>,
}

impl<'a> CvProblem<'a> {
    pub fn new(y: &'a [f64], x: &'a DMatrix<f64>, geometry: &'a dyn PairwiseGeometry) -> Self {
        Self {
            y,
            x,
            geometry,
            groups: None,
        }
    }

    pub fn with_groups(mut self, groups: &'a [usize]) -> Self {
        self.groups = Some(groups);
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.x.nrows() != n || self.geometry.len() != n {
            return Err(GplmError::invalid(format!(
                "cross-validation inputs disagree: {n} responses, {} covariate rows, {} points",
                self.x.nrows(),
                self.geometry.len()
            )));
        }
        if let Some(g) = self.groups {
            if g.len() != n {
                return Err(GplmError::invalid("one group id per row is required"));
            }
        }
        Ok(())
    }

    /// Row indices of each subject, in order of first appearance.
    pub fn folds(&self) -> Vec<(usize, Vec<usize>)> {
        subject_folds(self.n(), self.groups)
    }
}

/// Rows of each subject in order of first appearance; without group ids
/// every row is its own subject.
pub fn subject_folds(n: usize, groups: Option<&[usize]>) -> Vec<(usize, Vec<usize>)> {
    match groups {
        None => (0..n).map(|i| (i, vec![i])).collect(),
        Some(groups) => {
            let mut order = Vec::new();
            let mut rows: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &g) in groups.iter().enumerate().take(n) {
                rows.entry(g)
                    .or_insert_with(|| {
                        order.push(g);
                        Vec::new()
                    })
                    .push(i);
            }
            order
                .into_iter()
                .map(|g| {
                    let r = rows.remove(&g).unwrap_or_default();
                    (g, r)
                })
                .collect()
        }
    }
}

/// Held-out prediction for one row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvPrediction {
    pub row: usize,
    pub group: usize,
    pub truth: i64,
    pub predicted: i64,
    /// `P(y = 1)` for logistic models, category probabilities for ordinal ones.
    pub probs: Vec<f64>,
}

/// A fold that contributed no predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldIssue {
    pub group: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    /// Name of the fitted model, e.g. `logistic` or `baseline`.
    pub method: String,
    /// Kernel bandwidth; `None` for methods without a smoother.
    pub bandwidth: Option<f64>,
    /// Percentage of correctly classified evaluated rows.
    pub accuracy: f64,
    pub n_evaluated: usize,
    pub n_correct: usize,
    /// Sorted class labels indexing the confusion matrix.
    pub labels: Vec<i64>,
    /// `confusion[t][p]` counts rows of true label `labels[t]` predicted as `labels[p]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<CvPrediction>,
    /// Folds left out because a class was missing from their training rows.
    pub skipped: Vec<FoldIssue>,
    /// Folds whose fit or prediction failed numerically.
    pub failed: Vec<FoldIssue>,
    /// Folds whose fit stopped at `max_iter`.
    pub nonconverged: usize,
}

impl CvReport {
    /// Tallies held-out predictions; `labels` lists every class of the problem.
    pub fn assemble(
        method: &str,
        bandwidth: Option<f64>,
        labels: Vec<i64>,
        mut predictions: Vec<CvPrediction>,
        skipped: Vec<FoldIssue>,
        failed: Vec<FoldIssue>,
        nonconverged: usize,
    ) -> Result<Self> {
        if predictions.is_empty() {
            return Err(GplmError::DegenerateDataset(format!(
                "no fold produced a prediction ({} skipped, {} failed)",
                skipped.len(),
                failed.len()
            )));
        }
        predictions.sort_by_key(|p| p.row);
        let index = |label: i64| labels.iter().position(|&l| l == label);
        let mut confusion = vec![vec![0; labels.len()]; labels.len()];
        let mut n_correct = 0;
        for p in &predictions {
            let (t, q) = index(p.truth)
                .zip(index(p.predicted))
                .ok_or_else(|| GplmError::invalid(format!("label outside {labels:?}")))?;
            confusion[t][q] += 1;
            n_correct += usize::from(t == q);
        }
        let n_evaluated = predictions.len();
        Ok(Self {
            method: method.to_string(),
            bandwidth,
            accuracy: 100.0 * n_correct as f64 / n_evaluated as f64,
            n_evaluated,
            n_correct,
            labels,
            confusion,
            predictions,
            skipped,
            failed,
            nonconverged,
        })
    }
}

fn class_labels(kind: ModelKind, y: &[f64]) -> Result<Vec<i64>> {
    match kind {
        ModelKind::Logistic => Ok(vec![0, 1]),
        ModelKind::Ordinal => Ok(vec![1, 2, 3]),
        ModelKind::Plm => Err(GplmError::Unsupported(
            "classification accuracy is undefined for a Gaussian response".into(),
        )),
    }
    .and_then(|labels| {
        match y.iter().find(|&&v| !labels.iter().any(|&l| l as f64 == v)) {
            Some(bad) => Err(GplmError::invalid(format!(
                "{} response contains label {bad}",
                kind.name()
            ))),
            None => Ok(labels),
        }
    })
}

/// Fits `kind` on the rows `train` only.
pub fn fit_fold(
    problem: &CvProblem<'_>,
    kind: ModelKind,
    cfg: &FitConfig,
    train: &[usize],
) -> Result<GplmFit> {
    let view = Subset::new(problem.geometry, train.to_vec())?;
    let y: Vec<f64> = train.iter().map(|&i| problem.y[i]).collect();
    let x = problem.x.select_rows(train);
    match kind {
        ModelKind::Logistic => fit_logistic_plm(&y, &x, &view, cfg),
        ModelKind::Ordinal => fit_ordinal_plm(&y, &x, &view, cfg),
        ModelKind::Plm => Err(GplmError::Unsupported(
            "cross-validation of Gaussian fits".into(),
        )),
    }
}

/// Predicted label and probabilities for row `row` from a fit on `train`.
pub fn predict_row(
    problem: &CvProblem<'_>,
    fit: &GplmFit,
    train: &[usize],
    row: usize,
) -> Result<(i64, Vec<f64>)> {
    let spec = KernelSpec::gaussian(fit.bandwidth)?;
    let weights = kernel_row(problem.geometry, row, train, &spec)?;
    let x_new: Vec<f64> = problem.x.row(row).iter().copied().collect();
    match fit.kind {
        ModelKind::Logistic => {
            let p = fit.predict_logistic(&x_new, &weights)?;
            Ok((i64::from(p >= 0.5), vec![p]))
        }
        ModelKind::Ordinal => {
            let OrdinalPrediction { probs, class, .. } = fit.predict_ordinal(&x_new, &weights)?;
            Ok((i64::from(class), probs.to_vec()))
        }
        ModelKind::Plm => Err(GplmError::Unsupported("classification from a Gaussian fit".into())),
    }
}

enum FoldOutcome {
    Evaluated(Vec<CvPrediction>, bool),
    Skipped(FoldIssue),
    Failed(FoldIssue),
}

fn run_fold(
    problem: &CvProblem<'_>,
    kind: ModelKind,
    cfg: &FitConfig,
    labels: &[i64],
    group: usize,
    test: &[usize],
) -> Result<FoldOutcome> {
    let train: Vec<usize> = (0..problem.n()).filter(|i| !test.contains(i)).collect();
    let missing: Vec<i64> = labels
        .iter()
        .copied()
        .filter(|&l| !train.iter().any(|&i| problem.y[i] == l as f64))
        .collect();
    if !missing.is_empty() {
        log::warn!("fold {group}: training rows miss classes {missing:?}; skipped");
        return Ok(FoldOutcome::Skipped(FoldIssue {
            group,
            reason: format!("training rows miss classes {missing:?}"),
        }));
    }
    let attempt = || -> Result<(Vec<CvPrediction>, bool)> {
        let fit = fit_fold(problem, kind, cfg, &train)?;
        let preds = test
            .iter()
            .map(|&row| {
                let (predicted, probs) = predict_row(problem, &fit, &train, row)?;
                Ok(CvPrediction {
                    row,
                    group,
                    truth: problem.y[row] as i64,
                    predicted,
                    probs,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((preds, fit.converged))
    };
    match attempt() {
        Ok((preds, converged)) => Ok(FoldOutcome::Evaluated(preds, converged)),
        Err(e) if e.is_numerical() => {
            log::warn!("fold {group}: {e}");
            Ok(FoldOutcome::Failed(FoldIssue {
                group,
                reason: e.to_string(),
            }))
        }
        Err(e) => Err(e),
    }
}

/// Leave-one-subject-out cross-validation at the bandwidth in `cfg`.
pub fn loocv(problem: &CvProblem<'_>, kind: ModelKind, cfg: &FitConfig) -> Result<CvReport> {
    problem.validate()?;
    cfg.validate()?;
    let labels = class_labels(kind, problem.y)?;
    let folds = problem.folds();
    if folds.len() < 3 {
        return Err(GplmError::invalid(format!(
            "cross-validation needs at least 3 subjects, got {}",
            folds.len()
        )));
    }
    let outcomes = folds
        .par_iter()
        .map(|(group, test)| run_fold(problem, kind, cfg, &labels, *group, test))
        .collect::<Result<Vec<_>>>()?;

    let (mut predictions, mut skipped, mut failed) = (Vec::new(), Vec::new(), Vec::new());
    let mut nonconverged = 0;
    for outcome in outcomes {
        match outcome {
            FoldOutcome::Evaluated(p, converged) => {
                predictions.extend(p);
                nonconverged += usize::from(!converged);
            }
            FoldOutcome::Skipped(issue) => skipped.push(issue),
            FoldOutcome::Failed(issue) => failed.push(issue),
        }
    }
    CvReport::assemble(
        kind.name(),
        Some(cfg.kernel.bandwidth),
        labels,
        predictions,
        skipped,
        failed,
        nonconverged,
    )
}

/// One cross-validation per bandwidth, sorted by increasing bandwidth.
pub fn bandwidth_sweep(
    problem: &CvProblem<'_>,
    kind: ModelKind,
    grid: &[f64],
    cfg: &FitConfig,
) -> Result<Vec<CvReport>> {
    if grid.is_empty() {
        return Err(GplmError::invalid("bandwidth grid is empty"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted
        .par_iter()
        .map(|&h| {
            let mut c = *cfg;
            c.kernel = KernelSpec::gaussian(h)?;
            loocv(problem, kind, &c)
        })
        .collect()
}

/// Bandwidth with the highest accuracy; ties go to the smallest bandwidth.
pub fn best_bandwidth(reports: &[CvReport]) -> Option<f64> {
    reports
        .iter()
        .filter_map(|r| r.bandwidth.map(|h| (h, r.accuracy)))
        .fold(None, |best: Option<(f64, f64)>, (h, acc)| match best {
            Some((bh, bacc)) if bacc > acc || (bacc == acc && bh <= h) => Some((bh, bacc)),
            _ => Some((h, acc)),
        })
        .map(|(h, _)| h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Sphere, SpherePoint};
    use crate::smoothing::SmootherCache;

    fn pred(row: usize, truth: i64, predicted: i64) -> CvPrediction {
        CvPrediction {
            row,
            group: row,
            truth,
            predicted,
            probs: vec![],
        }
    }

    #[test]
    fn constant_predictor_scores_majority_share() {
        let truth = [0, 0, 1, 0, 1, 0, 0];
        let preds = truth.iter().enumerate().map(|(i, &t)| pred(i, t, 0)).collect();
        let r = CvReport::assemble("logistic", Some(0.1), vec![0, 1], preds, vec![], vec![], 0)
            .unwrap();
        assert!((r.accuracy - 100.0 * 5.0 / 7.0).abs() < 1e-12);
        assert_eq!(r.confusion, vec![vec![5, 0], vec![2, 0]]);
        let row_sums: Vec<usize> = r.confusion.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(row_sums, vec![5, 2]);
    }

    #[test]
    fn all_folds_skipped_is_degenerate() {
        let err = CvReport::assemble("ordinal", Some(0.1), vec![1, 2, 3], vec![], vec![], vec![], 0)
            .unwrap_err();
        assert!(matches!(err, GplmError::DegenerateDataset(_)));
    }

    #[test]
    fn best_bandwidth_prefers_smaller_on_ties() {
        let mk = |h: f64, acc: f64| CvReport {
            method: "logistic".into(),
            bandwidth: Some(h),
            accuracy: acc,
            n_evaluated: 1,
            n_correct: 1,
            labels: vec![],
            confusion: vec![],
            predictions: vec![],
            skipped: vec![],
            failed: vec![],
            nonconverged: 0,
        };
        let reports = vec![mk(0.3, 80.0), mk(0.1, 90.0), mk(0.05, 90.0), mk(0.2, 85.0)];
        assert_eq!(best_bandwidth(&reports), Some(0.05));
        assert_eq!(best_bandwidth(&[]), None);
    }

    #[test]
    fn groups_hold_out_together() {
        let sphere = Sphere::new(2).unwrap();
        let pts = vec![SpherePoint::from_lat_lon(0.0, 0.0); 4];
        let cache = SmootherCache::build(&sphere, &pts).unwrap();
        let y = [1.0, 2.0, 3.0, 1.0];
        let x = DMatrix::zeros(4, 1);
        let groups = [7, 3, 7, 5];
        let problem = CvProblem::new(&y, &x, &cache).with_groups(&groups);
        assert_eq!(
            problem.folds(),
            vec![(7, vec![0, 2]), (3, vec![1]), (5, vec![3])]
        );
    }

    #[test]
    fn gaussian_cv_is_unsupported() {
        let sphere = Sphere::new(2).unwrap();
        let pts: Vec<SpherePoint> = (0..5).map(|i| SpherePoint::from_lat_lon(0.1 * i as f64, 0.0)).collect();
        let cache = SmootherCache::build(&sphere, &pts).unwrap();
        let y = [0.1, 0.2, 0.3, 0.4, 0.5];
        let x = DMatrix::from_fn(5, 1, |i, _| i as f64);
        let problem = CvProblem::new(&y, &x, &cache);
        let cfg = FitConfig::new(0.2).unwrap();
        assert!(matches!(
            loocv(&problem, ModelKind::Plm, &cfg),
            Err(GplmError::Unsupported(_))
        ));
    }
}
