//! `gplm`: fit, cross-validate and apply partially linear models with a
//! shape-space covariate.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gplm_core::baselines::{baseline_loocv, BaselineProblem, DEFAULT_VAR_THRESHOLD};
use gplm_core::io::{
    format_bandwidth, ingest, parse_bandwidth, write_cv_detail, write_cv_table, CacheStore,
    DatasetBundle, FitReport, RunConfig,
};
use gplm_core::models::{fit_logistic_plm, fit_ordinal_plm, fit_plm, IrlsVariant, ModelKind};
use gplm_core::geometry::KendallShapeSpace;
use gplm_core::selection::{bandwidth_sweep, best_bandwidth, CvProblem, CvReport};
use gplm_core::smoothing::{LiveGeometry, PairwiseGeometry, SmootherCache};
use gplm_core::GplmError;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "gplm", version, about = "Partially linear models on Kendall shape space")]
struct Cli {
    /// Worker threads for parallel folds and distance matrices.
    #[arg(long, global = true, env = "GPLM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one model on the whole dataset and write a JSON fit report.
    Fit(FitArgs),
    /// Leave-one-subject-out cross-validation over a bandwidth grid.
    Cv(CvArgs),
    /// Apply a saved fit to the specimens of another manifest.
    Predict(PredictArgs),
    /// Write the pairwise Procrustes distance matrix.
    Distances(DistancesArgs),
    /// Cross-validate the tangent-PCA plus cumulative-logit baseline.
    Baseline(BaselineArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset manifest (CSV).
    #[arg(long)]
    manifest: PathBuf,

    /// Directory for persistent distance caches.
    #[arg(long, conflicts_with = "no_cache")]
    cache_dir: Option<PathBuf>,

    /// Recompute distances on demand instead of caching the matrix.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Stop when the relative change of beta falls below this
    #[arg(long, default_value_t = 2e-4)]
    threshold: f64,

    /// Iteration cap; reaching it is reported, not an error
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,

    /// Absolute ridge added to the beta normal equations
    #[arg(long, default_value_t = 1e-8)]
    ridge: f64,

    /// Fitted probabilities are clamped to [floor, 1 - floor]
    #[arg(long, default_value_t = 1e-10)]
    prob_floor: f64,

    /// Ordinal working weights: `paper` or `standard`
    #[arg(long, default_value = "paper", value_parser = parse_variant)]
    irls_variant: IrlsVariant,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,

    /// `plm`, `logistic` or `ordinal`
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,

    /// Bandwidth in radians; accepts forms such as `0.03`, `pi/100`, `2pi/25`.
    #[arg(long, value_parser = parse_h)]
    h: f64,

    #[command(flatten)]
    solver: SolverArgs,

    /// Output file for the fit report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,

    /// `plm`, `logistic` or `ordinal`
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,

    /// Comma-separated bandwidths, e.g. `pi/50,pi/100,pi/120`.
    #[arg(long, value_delimiter = ',', value_parser = parse_h, required = true)]
    grid: Vec<f64>,

    #[command(flatten)]
    solver: SolverArgs,

    /// Output directory for `cv.csv`, `cv_detail.csv` and `run.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Fit report written by `fit`.
    #[arg(long)]
    fit: PathBuf,

    /// Manifest of the specimens to predict.
    #[arg(long)]
    input: PathBuf,

    /// Output directory for `predictions.csv` and `run.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DistancesArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Output directory for `distances.csv` and `run.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Share of tangent-space variance retained by the PCA step.
    #[arg(long, default_value_t = DEFAULT_VAR_THRESHOLD)]
    var_threshold: f64,

    /// Output directory for `baseline.csv`, `baseline_detail.csv` and `run.json`.
    #[arg(long)]
    out: PathBuf,
}

fn parse_h(s: &str) -> Result<f64, String> {
    parse_bandwidth(s).map_err(|e| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

fn parse_variant(s: &str) -> Result<IrlsVariant, String> {
    s.parse::<IrlsVariant>().map_err(|e| e.to_string())
}

/// A failure together with the operation it interrupted.
#[derive(Debug)]
struct Failure {
    operation: String,
    error: GplmError,
}

impl Failure {
    fn exit_code(&self) -> u8 {
        if self.error.is_numerical() {
            EXIT_NUMERICAL
        } else {
            EXIT_USAGE
        }
    }
}

trait Context<T> {
    fn during(self, operation: impl Into<String>) -> Result<T, Failure>;
}

impl<T> Context<T> for gplm_core::Result<T> {
    fn during(self, operation: impl Into<String>) -> Result<T, Failure> {
        self.map_err(|error| Failure {
            operation: operation.into(),
            error,
        })
    }
}

/// Names the specimen behind an index-carrying error, when there is one.
fn subject_hint(error: &GplmError, ids: &[String]) -> Option<String> {
    let name = |i: usize| ids.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
    match error {
        GplmError::BandwidthTooSmall { query, .. } => Some(format!("subject {}", name(*query))),
        GplmError::NonFiniteGeometry { i, j } => Some(format!("subjects {} and {}", name(*i), name(*j))),
        _ => None,
    }
}

fn with_subject<T>(result: gplm_core::Result<T>, operation: &str, ids: &[String]) -> Result<T, Failure> {
    result.map_err(|error| {
        let operation = match subject_hint(&error, ids) {
            Some(hint) => format!("{operation} ({hint})"),
            None => operation.to_string(),
        };
        Failure { operation, error }
    })
}

fn install_threads(threads: Option<usize>) -> Result<(), Failure> {
    let Some(n) = threads else {
        return Ok(());
    };
    if n == 0 {
        return Err(Failure {
            operation: "--threads".into(),
            error: GplmError::InvalidArgument("thread count must be positive".into()),
        });
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure {
            operation: "thread pool setup".into(),
            error: GplmError::InvalidArgument(e.to_string()),
        })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| GplmError::Io {
            path: dir.to_path_buf(),
            source: e,
        })
        .during("creating the output directory")
}

fn display(p: &Path) -> Option<String> {
    Some(p.display().to_string())
}

fn base_config(command: &str, threads: Option<usize>, data: Option<&DataArgs>, out: &Path) -> RunConfig {
    let mut rc = RunConfig::new(command);
    rc.threads = threads;
    rc.output_dir = display(out);
    if let Some(d) = data {
        rc.manifest = display(&d.manifest);
        rc.cache_dir = d.cache_dir.as_deref().and_then(display);
        rc.use_cache = !d.no_cache;
    }
    rc
}

fn apply_solver(rc: &mut RunConfig, s: &SolverArgs) {
    rc.threshold = s.threshold;
    rc.max_iter = s.max_iter;
    rc.ridge = s.ridge;
    rc.prob_floor = s.prob_floor;
    rc.irls_variant = s.irls_variant;
}

/// Sidecar that ties CSV outputs to the run that produced them.
#[derive(Serialize)]
struct RunRecord<'a> {
    run_config: &'a RunConfig,
    dataset_hash: &'a str,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_dataset_hash: Option<&'a str>,
}

fn write_run_record(dir: &Path, record: &RunRecord<'_>) -> Result<(), Failure> {
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(record).map_err(|e| Failure {
        operation: "writing run.json".into(),
        error: GplmError::InvalidArgument(e.to_string()),
    })?;
    std::fs::write(&path, text)
        .map_err(|e| GplmError::Io { path, source: e })
        .during("writing run.json")
}

/// Loaded dataset plus the geometry every command runs against.
struct Loaded {
    bundle: DatasetBundle,
    cache: Option<std::sync::Arc<SmootherCache>>,
    backend: KendallShapeSpace,
}

impl Loaded {
    fn open(data: &DataArgs) -> Result<Self, Failure> {
        let store = if data.no_cache {
            None
        } else {
            Some(match &data.cache_dir {
                Some(dir) => CacheStore::with_dir(dir),
                None => CacheStore::in_memory(),
            })
        };
        let bundle = ingest(&data.manifest, store.as_ref())
            .during(format!("ingesting {}", data.manifest.display()))?;
        let backend = bundle.backend().during("building the shape space")?;
        let cache = bundle.cache.clone();
        Ok(Self { bundle, cache, backend })
    }

    fn with_geometry<T>(&self, f: impl FnOnce(&dyn PairwiseGeometry) -> T) -> T {
        match &self.cache {
            Some(c) => f(c.as_ref()),
            None => f(&LiveGeometry::new(&self.backend, &self.bundle.shapes)),
        }
    }
}

fn run_fit(args: &FitArgs, threads: Option<usize>) -> Result<(), Failure> {
    let mut rc = base_config("fit", threads, Some(&args.data), &args.out);
    apply_solver(&mut rc, &args.solver);
    rc.model = Some(args.model);
    rc.bandwidth = Some(args.h);
    let cfg = rc.fit_config(args.h).during("--h / solver options")?;
    let data = Loaded::open(&args.data)?;
    let b = &data.bundle;
    let y = b.labelled_responses().during("reading responses")?;
    let operation = format!("{} fit at h={}", args.model.name(), format_bandwidth(args.h));
    let fit = data.with_geometry(|g| match args.model {
        ModelKind::Plm => fit_plm(&y, &b.x, g, &cfg),
        ModelKind::Logistic => fit_logistic_plm(&y, &b.x, g, &cfg),
        ModelKind::Ordinal => fit_ordinal_plm(&y, &b.x, g, &cfg),
    });
    let fit = with_subject(fit, &operation, &b.ids)?;
    if !fit.converged {
        log::warn!("{operation} stopped after {} iterations without converging", fit.iterations);
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    FitReport::new(rc, b, &fit)
        .and_then(|r| r.write(&args.out))
        .during("writing the fit report")?;
    let beta: Vec<String> = fit.beta.iter().map(|v| format!("{v:.6}")).collect();
    println!(
        "{operation}: beta = [{}], iterations = {}, converged = {}",
        beta.join(", "),
        fit.iterations,
        fit.converged
    );
    Ok(())
}

fn report_lines(reports: &[CvReport]) {
    for r in reports {
        let label = r.bandwidth.map(format_bandwidth).unwrap_or_else(|| r.method.clone());
        println!(
            "{label}: accuracy {:.2}% ({}/{}), skipped {}, failed {}",
            r.accuracy,
            r.n_correct,
            r.n_evaluated,
            r.skipped.len(),
            r.failed.len()
        );
        for f in &r.failed {
            log::warn!("{label}: fold {} failed: {}", f.group, f.reason);
        }
    }
}

fn run_cv(args: &CvArgs, threads: Option<usize>) -> Result<(), Failure> {
    let mut rc = base_config("cv", threads, Some(&args.data), &args.out);
    apply_solver(&mut rc, &args.solver);
    rc.model = Some(args.model);
    rc.grid = args.grid.clone();
    let first = *args.grid.first().ok_or_else(|| Failure {
        operation: "--grid".into(),
        error: GplmError::InvalidArgument("empty bandwidth grid".into()),
    })?;
    let cfg = rc.fit_config(first).during("--grid / solver options")?;
    let data = Loaded::open(&args.data)?;
    let b = &data.bundle;
    let y = b.labelled_responses().during("reading responses")?;
    let groups = b.group_indices();
    let reports = data
        .with_geometry(|g| {
            let problem = CvProblem::new(&y, &b.x, g).with_groups(&groups);
            bandwidth_sweep(&problem, args.model, &args.grid, &cfg)
        })
        .during(format!("{} cross-validation", args.model.name()))?;
    create_dir(&args.out)?;
    write_cv_table(&args.out.join("cv.csv"), &reports).during("writing cv.csv")?;
    write_cv_detail(&args.out.join("cv_detail.csv"), &reports, &b.ids).during("writing cv_detail.csv")?;
    let best = best_bandwidth(&reports);
    write_run_record(
        &args.out,
        &RunRecord {
            run_config: &rc,
            dataset_hash: &b.hash,
            outputs: vec!["cv.csv".into(), "cv_detail.csv".into()],
            best_bandwidth: best,
            fit_dataset_hash: None,
        },
    )?;
    report_lines(&reports);
    if let Some(h) = best {
        println!("best bandwidth: {}", format_bandwidth(h));
    }
    Ok(())
}

fn run_predict(args: &PredictArgs, threads: Option<usize>) -> Result<(), Failure> {
    let mut rc = base_config("predict", threads, None, &args.out);
    rc.manifest = display(&args.input);
    rc.use_cache = false;
    let report = FitReport::read(&args.fit).during(format!("reading {}", args.fit.display()))?;
    rc.model = Some(report.model);
    rc.bandwidth = Some(report.bandwidth);
    rc.irls_variant = report.irls_variant;
    let fit = report.to_fit().during("restoring the fit")?;
    let train = report.training_shapes().during("restoring training shapes")?;
    let input = ingest(&args.input, None).during(format!("ingesting {}", args.input.display()))?;
    if (input.k, input.m) != (report.landmarks, report.ambient_dim) {
        return Err(Failure {
            operation: "matching input to the fit".into(),
            error: GplmError::DimensionMismatch {
                id: input.ids.first().cloned().unwrap_or_default(),
                expected: format!("{}x{}", report.landmarks, report.ambient_dim),
                found: format!("{}x{}", input.k, input.m),
            },
        });
    }
    if input.x.ncols() != fit.beta.len() {
        return Err(Failure {
            operation: "matching input to the fit".into(),
            error: GplmError::InvalidArgument(format!(
                "fit uses covariates {:?}, input provides {:?}",
                report.covariate_names, input.covariate_names
            )),
        });
    }
    let backend = KendallShapeSpace::new(report.landmarks, report.ambient_dim).during("building the shape space")?;
    let mut rows = Vec::with_capacity(input.n());
    for i in 0..input.n() {
        let id = &input.ids[i];
        let operation = format!("prediction for subject {id}");
        let weights = fit.kernel_weights_at(&backend, &train, &input.shapes[i]).during(&operation)?;
        let x: Vec<f64> = input.x.row(i).iter().copied().collect();
        let (values, label) = match report.model {
            ModelKind::Plm => {
                let v = fit.predict_plm(&x, &weights).during(&operation)?;
                (vec![v], format!("{v:?}"))
            }
            ModelKind::Logistic => {
                let p = fit.predict_logistic(&x, &weights).during(&operation)?;
                (vec![p], u8::from(p >= 0.5).to_string())
            }
            ModelKind::Ordinal => {
                let pred = fit.predict_ordinal(&x, &weights).during(&operation)?;
                (pred.probs.to_vec(), pred.class.to_string())
            }
        };
        rows.push((id.clone(), values, label));
    }
    create_dir(&args.out)?;
    let header = match report.model {
        ModelKind::Plm => "id,fitted,predicted",
        ModelKind::Logistic => "id,prob_1,predicted",
        ModelKind::Ordinal => "id,prob_1,prob_2,prob_3,predicted",
    };
    let mut text = format!("{header}\n");
    for (id, values, label) in &rows {
        let cols: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&format!("{id},{},{label}\n", cols.join(",")));
    }
    let path = args.out.join("predictions.csv");
    std::fs::write(&path, text)
        .map_err(|e| GplmError::Io { path, source: e })
        .during("writing predictions.csv")?;
    write_run_record(
        &args.out,
        &RunRecord {
            run_config: &rc,
            dataset_hash: &input.hash,
            outputs: vec!["predictions.csv".into()],
            best_bandwidth: None,
            fit_dataset_hash: Some(&report.dataset_hash),
        },
    )?;
    println!("wrote {} predictions", rows.len());
    Ok(())
}

fn run_distances(args: &DistancesArgs, threads: Option<usize>) -> Result<(), Failure> {
    let rc = base_config("distances", threads, Some(&args.data), &args.out);
    let data = Loaded::open(&args.data)?;
    let b = &data.bundle;
    let matrix = match &data.cache {
        Some(c) => c.distances().clone(),
        None => SmootherCache::build(&data.backend, &b.shapes)
            .during("computing distances")?
            .distances()
            .clone(),
    };
    create_dir(&args.out)?;
    let mut text = format!("id,{}\n", b.ids.join(","));
    for (i, id) in b.ids.iter().enumerate() {
        let cols: Vec<String> = matrix.row(i).iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&format!("{id},{}\n", cols.join(",")));
    }
    let path = args.out.join("distances.csv");
    std::fs::write(&path, text)
        .map_err(|e| GplmError::Io { path, source: e })
        .during("writing distances.csv")?;
    write_run_record(
        &args.out,
        &RunRecord {
            run_config: &rc,
            dataset_hash: &b.hash,
            outputs: vec!["distances.csv".into()],
            best_bandwidth: None,
            fit_dataset_hash: None,
        },
    )?;
    println!("wrote {n}x{n} distance matrix", n = b.n());
    Ok(())
}

fn run_baseline(args: &BaselineArgs, threads: Option<usize>) -> Result<(), Failure> {
    let mut rc = base_config("baseline", threads, Some(&args.data), &args.out);
    rc.var_threshold = Some(args.var_threshold);
    let data = Loaded::open(&args.data)?;
    let b = &data.bundle;
    let y = b.labelled_responses().during("reading responses")?;
    let groups = b.group_indices();
    let problem = BaselineProblem {
        chart: &data.backend,
        points: &b.shapes,
        y: &y,
        covariates: &b.x,
        groups: Some(&groups),
        var_threshold: args.var_threshold,
    };
    let report = baseline_loocv(&problem).during("baseline cross-validation")?;
    create_dir(&args.out)?;
    let reports = [report];
    write_cv_table(&args.out.join("baseline.csv"), &reports).during("writing baseline.csv")?;
    write_cv_detail(&args.out.join("baseline_detail.csv"), &reports, &b.ids)
        .during("writing baseline_detail.csv")?;
    write_run_record(
        &args.out,
        &RunRecord {
            run_config: &rc,
            dataset_hash: &b.hash,
            outputs: vec!["baseline.csv".into(), "baseline_detail.csv".into()],
            best_bandwidth: None,
            fit_dataset_hash: None,
        },
    )?;
    report_lines(&reports);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    install_threads(cli.threads)?;
    match &cli.command {
        Command::Fit(a) => run_fit(a, cli.threads),
        Command::Cv(a) => run_cv(a, cli.threads),
        Command::Predict(a) => run_predict(a, cli.threads),
        Command::Distances(a) => run_distances(a, cli.threads),
        Command::Baseline(a) => run_baseline(a, cli.threads),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {} failed: {}", f.operation, f.error);
            ExitCode::from(f.exit_code())
        }
    }
}
