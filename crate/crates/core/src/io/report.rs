use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bandwidth::format_bandwidth;
use super::dataset::DatasetBundle;
use crate::error::{GplmError, Result};
use crate::geometry::PreShape;
use crate::models::{FitConfig, GplmFit, IrlsVariant, ModelKind};
use crate::selection::CvReport;
use crate::smoothing::KernelSpec;

pub const FIT_REPORT_FORMAT: &str = "gplm-fit-report/1";

/// Every option of a run, echoed into each report it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub manifest: Option<String>,
    pub model: Option<ModelKind>,
    pub bandwidth: Option<f64>,
    pub grid: Vec<f64>,
    pub threshold: f64,
    pub max_iter: usize,
    pub ridge: f64,
    pub prob_floor: f64,
    pub irls_variant: IrlsVariant,
    pub var_threshold: Option<f64>,
    pub output_dir: Option<String>,
    pub cache_dir: Option<String>,
    pub use_cache: bool,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            manifest: None,
            model: None,
            bandwidth: None,
            grid: Vec::new(),
            threshold: 2e-4,
            max_iter: 1000,
            ridge: 1e-8,
            prob_floor: 1e-10,
            irls_variant: IrlsVariant::Paper,
            var_threshold: None,
            output_dir: None,
            cache_dir: None,
            use_cache: true,
            threads: None,
        }
    }

    pub fn fit_config(&self, bandwidth: f64) -> Result<FitConfig> {
        let cfg = FitConfig {
            kernel: KernelSpec::gaussian(bandwidth)?,
            threshold: self.threshold,
            max_iter: self.max_iter,
            ridge: self.ridge,
            prob_floor: self.prob_floor,
            irls_variant: self.irls_variant,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-subject columns of a fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectFit {
    pub id: String,
    pub response: Option<f64>,
    pub x: Vec<f64>,
    /// Row-major `(k-1) x m` preshape.
    pub preshape: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi0: Vec<f64>,
    pub g: Vec<f64>,
    pub z_final: Vec<f64>,
    /// Fitted mean, `P(y = 1)`, or the three category probabilities.
    pub fitted: Vec<f64>,
}

/// Self-contained record of a fit: configuration, dataset hash, coefficients,
/// convergence trace and everything needed to predict at new shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub format: String,
    pub run_config: RunConfig,
    pub dataset_hash: String,
    pub model: ModelKind,
    pub bandwidth: f64,
    pub bandwidth_label: String,
    pub irls_variant: IrlsVariant,
    pub covariate_names: Vec<String>,
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub clamp_events: usize,
    pub monotone_repairs: usize,
    pub landmarks: usize,
    pub ambient_dim: usize,
    pub subjects: Vec<SubjectFit>,
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

impl FitReport {
    pub fn new(run_config: RunConfig, bundle: &DatasetBundle, fit: &GplmFit) -> Result<Self> {
        if fit.n() != bundle.n() {
            return Err(GplmError::invalid("fit and dataset sizes differ"));
        }
        let fitted: Vec<Vec<f64>> = match fit.kind {
            ModelKind::Plm => fit.linear_predictors().column(0).iter().map(|&v| vec![v]).collect(),
            ModelKind::Logistic => fit.fitted_probabilities().into_iter().map(|p| vec![p]).collect(),
            ModelKind::Ordinal => fit.fitted_ordinal().into_iter().map(|p| p.probs.to_vec()).collect(),
        };
        let subjects = (0..bundle.n())
            .map(|i| {
                let z = bundle.shapes[i].matrix();
                SubjectFit {
                    id: bundle.ids[i].clone(),
                    response: bundle.responses[i],
                    x: row(&fit.x, i),
                    preshape: (0..z.nrows()).flat_map(|r| (0..z.ncols()).map(move |c| z[(r, c)])).collect(),
                    phi: row(&fit.phi, i),
                    phi0: row(&fit.phi0, i),
                    g: row(&fit.g, i),
                    z_final: row(&fit.z_final, i),
                    fitted: fitted[i].clone(),
                }
            })
            .collect();
        Ok(Self {
            format: FIT_REPORT_FORMAT.to_string(),
            run_config,
            dataset_hash: bundle.hash.clone(),
            model: fit.kind,
            bandwidth: fit.bandwidth,
            bandwidth_label: format_bandwidth(fit.bandwidth),
            irls_variant: fit.irls_variant,
            covariate_names: bundle.covariate_names.clone(),
            beta: fit.beta.iter().copied().collect(),
            iterations: fit.iterations,
            converged: fit.converged,
            trace: fit.trace.clone(),
            clamp_events: fit.clamp_events,
            monotone_repairs: fit.monotone_repairs,
            landmarks: bundle.k,
            ambient_dim: bundle.m,
            subjects,
        })
    }

    /// Rebuilds the fitted state for prediction.
    pub fn to_fit(&self) -> Result<GplmFit> {
        let n = self.subjects.len();
        let p = self.beta.len();
        let q = if self.model == ModelKind::Ordinal { 2 } else { 1 };
        let take = |name: &str, f: &dyn Fn(&SubjectFit) -> &Vec<f64>, cols: usize| {
            let mut m = DMatrix::zeros(n, cols);
            for (i, s) in self.subjects.iter().enumerate() {
                let v = f(s);
                if v.len() != cols {
                    return Err(GplmError::invalid(format!(
                        "fit report: subject {} has {} {name} values, expected {cols}",
                        s.id,
                        v.len()
                    )));
                }
                for (j, x) in v.iter().enumerate() {
                    m[(i, j)] = *x;
                }
            }
            Ok(m)
        };
        Ok(GplmFit {
            kind: self.model,
            beta: DVector::from_vec(self.beta.clone()),
            phi: take("phi", &|s| &s.phi, p)?,
            phi0: take("phi0", &|s| &s.phi0, q)?,
            g: take("g", &|s| &s.g, q)?,
            z_final: take("z_final", &|s| &s.z_final, q)?,
            x: take("x", &|s| &s.x, p)?,
            iterations: self.iterations,
            converged: self.converged,
            bandwidth: self.bandwidth,
            irls_variant: self.irls_variant,
            trace: self.trace.clone(),
            clamp_events: self.clamp_events,
            monotone_repairs: self.monotone_repairs,
        })
    }

    pub fn training_shapes(&self) -> Result<Vec<PreShape>> {
        let (rows, cols) = (self.landmarks.saturating_sub(1), self.ambient_dim);
        self.subjects
            .iter()
            .map(|s| {
                if s.preshape.len() != rows * cols {
                    return Err(GplmError::invalid(format!(
                        "fit report: preshape of {} has wrong length",
                        s.id
                    )));
                }
                PreShape::new(DMatrix::from_row_slice(rows, cols, &s.preshape))
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| GplmError::invalid(format!("fit report serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| GplmError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GplmError::io(path, e))?;
        let report: Self = serde_json::from_str(&text).map_err(|e| GplmError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if report.format != FIT_REPORT_FORMAT {
            return Err(GplmError::Parse {
                path: path.to_path_buf(),
                message: format!("unknown report format '{}'", report.format),
            });
        }
        Ok(report)
    }
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> GplmError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => GplmError::io(path, source),
        other => GplmError::invalid(format!("{}: {other:?}", path.display())),
    }
}

/// One row per bandwidth: `h,h_label,accuracy,n_evaluated,n_correct,n_skipped,n_failed,nonconverged`.
pub fn write_cv_table(path: &Path, reports: &[CvReport]) -> Result<()> {
    let err = csv_error(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record([
        "h", "h_label", "accuracy", "n_evaluated", "n_correct", "n_skipped", "n_failed", "nonconverged",
    ])
    .map_err(&err)?;
    for r in reports {
        let (h, label) = match r.bandwidth {
            Some(h) => (format!("{h:?}"), format_bandwidth(h)),
            None => (String::new(), r.method.clone()),
        };
        w.write_record([
            h,
            label,
            format!("{:.2}", r.accuracy),
            r.n_evaluated.to_string(),
            r.n_correct.to_string(),
            r.skipped.len().to_string(),
            r.failed.len().to_string(),
            r.nonconverged.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| GplmError::io(path, e))
}

/// Per-row held-out predictions: `h,row,id,group,truth,predicted,prob_1..prob_K`.
pub fn write_cv_detail(path: &Path, reports: &[CvReport], ids: &[String]) -> Result<()> {
    let err = csv_error(path);
    let width = reports
        .iter()
        .flat_map(|r| r.predictions.iter().map(|p| p.probs.len()))
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header: Vec<String> = ["h", "row", "id", "group", "truth", "predicted"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=width).map(|k| format!("prob_{k}")));
    w.write_record(&header).map_err(&err)?;
    for r in reports {
        for p in &r.predictions {
            let mut rec = vec![
                r.bandwidth.map(|h| format!("{h:?}")).unwrap_or_default(),
                p.row.to_string(),
                ids.get(p.row).cloned().unwrap_or_default(),
                p.group.to_string(),
                p.truth.to_string(),
                p.predicted.to_string(),
            ];
            rec.extend((0..width).map(|k| p.probs.get(k).map(|v| format!("{v:?}")).unwrap_or_default()));
            w.write_record(&rec).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| GplmError::io(path, e))
}
