//! Command-line front end.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 invalid config / flags /
//! inputs, 3 file-system errors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::estimators::{
    fit, mle, theoretical_lambda, EstimatorKind, FitOptions, Objective, TuningParams,
};
use crate::experiments::{
    run_comparison, run_deviation_check, run_rate_check, run_re_probability, ComparisonConfig,
    DeviationConfig, RateCheckConfig, ReProbabilityConfig,
};
use crate::model::{generate_sparse_stable, stationary_moments, DriftMatrix, LevySpec, OUModel};
use crate::numkit::{count_nonzero, sym_eig_extremes};
use crate::plot::{heat_map, line_chart, Series};
use crate::simulate::{
    fmt_f64, read_path_csv, rng_from_seed, simulate_path, split_seed, write_path_csv, SimConfig,
};
use crate::stats::{
    check_q_event, compute_stats, filter_jumps, q_deviation, re_constant, sigma_max, FilterRule,
    FilteredIncrements,
};
use crate::tuning::{cross_validate, write_cv_trace, CVConfig, CvScore, NNZ_THRESHOLD};
use crate::{Error, Matrix, Vector};

pub const THREADS_ENV: &str = "SPARSELAB_THREADS";

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError {
            code: 3,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => 3,
            Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => 3,
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::Config(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "sparselab",
    version,
    about = "Sparse drift estimation for Lévy-driven OU processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a path; writes the CSV and a JSON sidecar next to it.
    Simulate(SimulateArgs),
    /// Fit a drift matrix to a path.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo experiment selected by the config's `kind`.
    Experiment(ExperimentArgs),
    /// Report stationary constants and the empirical Q-event for a path.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Path CSV; the sidecar goes to the same stem with `.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IncrementsArg {
    /// Threshold-filter jumps when the model has them.
    Auto,
    Filtered,
    Raw,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("tuning").args(["lambda", "cv", "theoretical"]).multiple(false)))]
pub struct EstimateArgs {
    #[arg(long)]
    pub path: PathBuf,
    /// Model sidecar; defaults to the path with a `.json` extension.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    pub estimator: EstimatorKind,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub cv: bool,
    #[arg(long)]
    pub theoretical: bool,
    /// Cross-validation config (JSON) replacing the defaults.
    #[arg(long, requires = "cv")]
    pub cv_config: Option<PathBuf>,
    #[arg(long, requires = "cv")]
    pub refit_full: bool,
    #[arg(long, requires = "cv", value_enum)]
    pub cv_score: Option<CvScoreArg>,
    /// Chaining constant for `--theoretical`.
    #[arg(long, default_value_t = 1.0, requires = "theoretical")]
    pub c0: f64,
    /// Sparsity guess for the theoretical Lasso level.
    #[arg(long, requires = "theoretical")]
    pub s_guess: Option<usize>,
    #[arg(long, value_enum, default_value_t = IncrementsArg::Auto)]
    pub increments: IncrementsArg,
    #[arg(long)]
    pub out: PathBuf,
    /// CV trace CSV; defaults to `<out stem>_cv.csv` with `--cv`.
    #[arg(long, requires = "cv")]
    pub trace: Option<PathBuf>,
    /// Heat map of the estimate.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CvScoreArg {
    Normalized,
    Likelihood,
}

fn parse_kind(s: &str) -> std::result::Result<EstimatorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// SVG figure of the main table.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Sparse random drift drawn from the config seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub d: usize,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
}

fn default_density() -> f64 {
    0.2
}
fn default_magnitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub intensity: f64,
    #[serde(default = "default_magnitude")]
    pub scale: f64,
}

/// Model section of a simulate config. Exactly one of `drift` and
/// `generate`; `sigma` defaults to the identity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<JumpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levy_drift: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    pub model: ModelSpec,
}

fn default_delta() -> f64 {
    crate::simulate::DEFAULT_DELTA
}

/// Fully explicit model as stored in the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedModel {
    pub drift: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub levy_drift: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<JumpSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub config: SimulateConfig,
    pub model: ResolvedModel,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> crate::Result<Matrix> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Config(format!(
            "`{what}` must be a nonempty square array of rows"
        )));
    }
    Ok(Matrix::from_row_iterator(
        d,
        d,
        rows.iter().flatten().copied(),
    ))
}

fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl ModelSpec {
    /// Resolves the model; `generate` draws from `seed`.
    pub fn resolve(&self, seed: u64) -> crate::Result<ResolvedModel> {
        let drift = match (&self.drift, &self.generate) {
            (Some(rows), None) => rows_to_matrix(rows, "drift")?,
            (None, Some(g)) => {
                let mut rng = rng_from_seed(split_seed(seed, u64::MAX));
                generate_sparse_stable(g.d, g.density, g.magnitude, &mut rng)?.into_inner()
            }
            _ => {
                return Err(Error::Config(
                    "model needs exactly one of `drift` and `generate`".into(),
                ))
            }
        };
        let d = drift.nrows();
        let sigma = match &self.sigma {
            Some(rows) => rows_to_matrix(rows, "sigma")?,
            None => Matrix::identity(d, d),
        };
        let levy_drift = self.levy_drift.clone().unwrap_or_else(|| vec![0.0; d]);
        Ok(ResolvedModel {
            drift: matrix_to_rows(&drift),
            sigma: matrix_to_rows(&sigma),
            levy_drift,
            jumps: self.jumps.clone(),
        })
    }
}

impl ResolvedModel {
    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn sigma_matrix(&self) -> crate::Result<Matrix> {
        rows_to_matrix(&self.sigma, "sigma")
    }

    pub fn to_model(&self) -> crate::Result<OUModel> {
        let drift = DriftMatrix::new(rows_to_matrix(&self.drift, "drift")?)?;
        let d = drift.dim();
        let sigma = self.sigma_matrix()?;
        if self.levy_drift.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.levy_drift.len(),
            });
        }
        let mut levy = match &self.jumps {
            Some(j) => LevySpec::with_laplace_jumps(sigma, j.intensity, j.scale)?,
            None => LevySpec::gaussian(sigma)?,
        };
        levy.drift = Vector::from_vec(self.levy_drift.clone());
        OUModel::new(drift, levy)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::usage(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// `<dir>/<stem><suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Matrix as nested JSON rows with 17 significant digits.
pub fn matrix_json(m: &Matrix) -> Box<RawValue> {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = m.row(i).iter().map(|x| fmt_f64(*x)).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    RawValue::from_string(format!("[{}]", rows.join(", "))).expect("finite floats form valid JSON")
}

fn number_json(x: f64) -> Box<RawValue> {
    if x.is_finite() {
        RawValue::from_string(fmt_f64(x)).expect("finite float is valid JSON")
    } else {
        RawValue::from_string("null".into()).expect("null is valid JSON")
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut cfg: SimulateConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let resolved = cfg.model.resolve(cfg.seed)?;
    let model = resolved.to_model()?;
    let sim_cfg = SimConfig {
        horizon: cfg.horizon,
        delta: cfg.delta,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
    };
    sim_cfg.validate()?;
    let sim = simulate_path(&model, &sim_cfg)?;
    let mut w = create(&args.out)?;
    write_path_csv(&sim.path, &mut w)?;
    w.flush().map_err(|e| CliError::io(&args.out, e))?;
    write_json(
        &args.out.with_extension("json"),
        &Sidecar {
            config: cfg,
            model: resolved,
        },
    )
}

fn load_path_and_model(
    path: &Path,
    model: Option<&Path>,
) -> CliResult<(crate::simulate::SamplePath, ResolvedModel)> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let sample = read_path_csv(BufReader::new(file))?;
    let sidecar_path = model
        .map(Path::to_path_buf)
        .unwrap_or_else(|| path.with_extension("json"));
    let sidecar: Sidecar = read_json(&sidecar_path)?;
    if sidecar.model.dim() != sample.dim() {
        return Err(CliError::usage(format!(
            "dimension mismatch: path has d={}, model has d={}",
            sample.dim(),
            sidecar.model.dim()
        )));
    }
    Ok((sample, sidecar.model))
}

fn increments_for(
    sample: &crate::simulate::SamplePath,
    model: &ResolvedModel,
    choice: IncrementsArg,
) -> CliResult<FilteredIncrements> {
    let filter = match choice {
        IncrementsArg::Raw => false,
        IncrementsArg::Filtered => true,
        IncrementsArg::Auto => model.jumps.as_ref().is_some_and(|j| j.intensity > 0.0),
    };
    if filter {
        Ok(filter_jumps(
            sample,
            &FilterRule::default(),
            sigma_max(&model.sigma_matrix()?),
        )?)
    } else {
        Ok(FilteredIncrements::unfiltered(sample))
    }
}

#[derive(Serialize)]
struct EstimateDiagnostics {
    iterations: usize,
    optimality_residual: Box<RawValue>,
    objective_value: Box<RawValue>,
    converged: bool,
    nnz: usize,
    nnz_threshold: Box<RawValue>,
    flagged_increments: usize,
}

#[derive(Serialize)]
struct EstimateOutput {
    estimator: EstimatorKind,
    tuning: &'static str,
    d: usize,
    #[serde(rename = "T")]
    horizon: Box<RawValue>,
    lambda: Box<RawValue>,
    #[serde(rename = "A_hat")]
    a_hat: Box<RawValue>,
    diagnostics: EstimateDiagnostics,
}

/// Estimate file as read back.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EstimateFile {
    pub estimator: EstimatorKind,
    pub tuning: String,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub lambda: Option<f64>,
    #[serde(rename = "A_hat")]
    pub a_hat: Vec<Vec<f64>>,
    pub diagnostics: serde_json::Value,
}

impl EstimateFile {
    pub fn matrix(&self) -> crate::Result<Matrix> {
        rows_to_matrix(&self.a_hat, "A_hat")
    }
}

pub fn read_estimate(path: &Path) -> CliResult<EstimateFile> {
    read_json(path)
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let penalized = args.estimator != EstimatorKind::Mle;
    let modes =
        usize::from(args.lambda.is_some()) + usize::from(args.cv) + usize::from(args.theoretical);
    if penalized && modes != 1 {
        return Err(CliError::usage(
            "penalized estimators need exactly one of --lambda, --cv, --theoretical",
        ));
    }
    if !penalized && modes != 0 {
        return Err(CliError::usage("the MLE takes no tuning flag"));
    }
    let (sample, model) = load_path_and_model(&args.path, args.model.as_deref())?;
    let sigma = model.sigma_matrix()?;
    let incs = increments_for(&sample, &model, args.increments)?;
    let opts = FitOptions::default();

    let (result, tuning) = if !penalized {
        (
            mle(&Objective::new(
                compute_stats(&sample, &incs.increments)?,
                &sigma,
            )?)?,
            "none",
        )
    } else if let Some(lambda) = args.lambda {
        let obj = Objective::new(compute_stats(&sample, &incs.increments)?, &sigma)?;
        (fit(&obj, args.estimator, lambda, &opts)?, "fixed")
    } else if args.theoretical {
        let stats = compute_stats(&sample, &incs.increments)?;
        // plug-in for κ_max
        let (_, kappa_max) = sym_eig_extremes(&stats.c_hat)?;
        let tuning = TuningParams::with_c0(args.c0);
        let lambda = theoretical_lambda(
            args.estimator,
            kappa_max,
            sample.horizon(),
            sample.dim(),
            args.s_guess,
            &tuning,
        )?;
        let obj = Objective::new(stats, &sigma)?;
        (fit(&obj, args.estimator, lambda, &opts)?, "theoretical")
    } else {
        let mut cv: CVConfig = match &args.cv_config {
            Some(p) => read_json(p)?,
            None => CVConfig::default(),
        };
        cv.kind = args.estimator;
        cv.refit_full |= args.refit_full;
        if let Some(s) = args.cv_score {
            cv.score = match s {
                CvScoreArg::Normalized => CvScore::Normalized,
                CvScoreArg::Likelihood => CvScore::Likelihood,
            };
        }
        let outcome = cross_validate(&sample, &incs.increments, &sigma, &cv, &opts)?;
        let trace_path = args
            .trace
            .clone()
            .unwrap_or_else(|| sibling(&args.out, "_cv.csv"));
        let mut w = create(&trace_path)?;
        write_cv_trace(&outcome.trace, &mut w)?;
        w.flush().map_err(|e| CliError::io(&trace_path, e))?;
        (outcome.result, "cv")
    };

    let out = EstimateOutput {
        estimator: args.estimator,
        tuning,
        d: sample.dim(),
        horizon: number_json(sample.horizon()),
        lambda: number_json(result.lambda),
        a_hat: matrix_json(&result.a_hat),
        diagnostics: EstimateDiagnostics {
            iterations: result.iterations,
            optimality_residual: number_json(result.optimality_residual),
            objective_value: number_json(result.objective_value),
            converged: result.converged,
            nnz: count_nonzero(&result.a_hat, NNZ_THRESHOLD),
            nnz_threshold: number_json(NNZ_THRESHOLD),
            flagged_increments: incs.flagged.len(),
        },
    };
    write_json(&args.out, &out)?;
    if let Some(p) = &args.heatmap {
        write_text(
            p,
            &heat_map(&format!("{} estimate", args.estimator), &result.a_hat),
        )?;
    }
    Ok(())
}

/// Experiment config with its `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Comparison(ComparisonConfig),
    RateCheck(RateCheckConfig),
    ReProbability(ReProbabilityConfig),
    DeviationCheck(DeviationConfig),
}

impl ExperimentConfig {
    fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::Comparison(c) => c.seed = seed,
            ExperimentConfig::RateCheck(c) => c.seed = seed,
            ExperimentConfig::ReProbability(c) => c.seed = seed,
            ExperimentConfig::DeviationCheck(c) => c.seed = seed,
        }
    }
}

fn flush_csv<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> crate::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn cmd_experiment(args: &ExperimentArgs) -> CliResult<()> {
    let mut cfg: ExperimentConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    match &cfg {
        ExperimentConfig::Comparison(c) => {
            let report = run_comparison(c)?;
            flush_csv(&args.out, |w| report.write_rows_csv(w))?;
            flush_csv(&sibling(&args.out, "_summary.csv"), |w| {
                report.write_summary_csv(w)
            })?;
            if let Some(p) = &args.plot {
                let series: Vec<Series> = c
                    .estimators
                    .iter()
                    .map(|&k| {
                        let cells: Vec<_> = c
                            .dims
                            .iter()
                            .filter_map(|&d| report.aggregate(d, k))
                            .collect();
                        Series {
                            name: k.to_string(),
                            x: cells.iter().map(|a| a.d as f64).collect(),
                            y: cells.iter().map(|a| a.mean_l2).collect(),
                            band: cells.iter().map(|a| a.sd_l2).collect(),
                        }
                    })
                    .collect();
                write_text(p, &line_chart("L2 error", "d", "mean L2 error", &series))?;
            }
        }
        ExperimentConfig::RateCheck(c) => {
            let report = run_rate_check(c)?;
            flush_csv(&args.out, |w| report.write_csv(w))?;
            flush_csv(&sibling(&args.out, "_rows.csv"), |w| {
                report.raw.write_rows_csv(w)
            })?;
            if let Some(p) = &args.plot {
                let s = Series {
                    name: "slope".into(),
                    x: report.table.iter().map(|r| r.horizon).collect(),
                    y: report.table.iter().map(|r| r.median_sq_error).collect(),
                    band: Vec::new(),
                };
                write_text(
                    p,
                    &line_chart("rate check", "T", "median squared L2 error", &[s]),
                )?;
            }
        }
        ExperimentConfig::ReProbability(c) => {
            let report = run_re_probability(c)?;
            flush_csv(&args.out, |w| report.write_csv(w))?;
            if let Some(p) = &args.plot {
                let s = Series {
                    name: "Q event".into(),
                    x: report.rows.iter().map(|r| r.horizon).collect(),
                    y: report.rows.iter().map(|r| r.frequency).collect(),
                    band: Vec::new(),
                };
                write_text(p, &line_chart("Q-event frequency", "T", "frequency", &[s]))?;
            }
        }
        ExperimentConfig::DeviationCheck(c) => {
            let report = run_deviation_check(c)?;
            flush_csv(&args.out, |w| report.write_csv(w))?;
            if let Some(p) = &args.plot {
                let x: Vec<f64> = report.rows.iter().map(|r| r.replication as f64).collect();
                let stat = Series {
                    name: "statistic".into(),
                    x: x.clone(),
                    y: report.rows.iter().map(|r| r.statistic).collect(),
                    band: Vec::new(),
                };
                let thr = Series {
                    name: "threshold".into(),
                    y: vec![report.threshold; x.len()],
                    x,
                    band: Vec::new(),
                };
                write_text(
                    p,
                    &line_chart(
                        "deviation check",
                        "replication",
                        "dictionary max",
                        &[stat, thr],
                    ),
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Diagnostics {
    d: usize,
    #[serde(rename = "T")]
    horizon: Box<RawValue>,
    kappa_min: Box<RawValue>,
    kappa_max: Box<RawValue>,
    lambda_min_c_hat: Box<RawValue>,
    q_deviation: Box<RawValue>,
    q_radius: Box<RawValue>,
    q_event: bool,
    jump_filter: FilterSummary,
}

#[derive(Serialize)]
struct FilterSummary {
    applied: bool,
    threshold: Box<RawValue>,
    flagged: usize,
    fraction: Box<RawValue>,
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> CliResult<()> {
    let (sample, resolved) = load_path_and_model(&args.path, args.model.as_deref())?;
    let model = resolved.to_model()?;
    let moments = stationary_moments(&model)?;
    let incs = increments_for(&sample, &resolved, IncrementsArg::Auto)?;
    let stats = compute_stats(&sample, &incs.increments)?;
    let radius = moments.kappa_min / 2.0;
    let out = Diagnostics {
        d: sample.dim(),
        horizon: number_json(sample.horizon()),
        kappa_min: number_json(moments.kappa_min),
        kappa_max: number_json(moments.kappa_max),
        lambda_min_c_hat: number_json(re_constant(&stats)?),
        q_deviation: number_json(q_deviation(&stats, &moments.c_inf)?),
        q_radius: number_json(radius),
        q_event: check_q_event(&stats, &moments.c_inf, radius)?,
        jump_filter: FilterSummary {
            applied: incs.threshold.is_finite(),
            threshold: number_json(incs.threshold),
            flagged: incs.flagged.len(),
            fraction: number_json(incs.fraction_flagged()),
        },
    };
    write_json(&args.out, &out)
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
            CliError::usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))
        })?;
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code. Messages go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_horizon_names_the_key() {
        let err =
            serde_json::from_str::<SimulateConfig>(r#"{"model":{"drift":[[1.0]]}}"#).unwrap_err();
        assert!(err.to_string().contains("`T`"), "{err}");
    }

    #[test]
    fn model_spec_needs_one_source() {
        let both = ModelSpec {
            drift: Some(vec![vec![1.0]]),
            generate: Some(GenerateSpec {
                d: 2,
                density: 0.2,
                magnitude: 1.0,
            }),
            ..ModelSpec::default()
        };
        assert!(both.resolve(0).is_err());
        assert!(ModelSpec::default().resolve(0).is_err());
    }

    #[test]
    fn resolved_model_round_trip() {
        let spec = ModelSpec {
            generate: Some(GenerateSpec {
                d: 3,
                density: 0.3,
                magnitude: 1.0,
            }),
            jumps: Some(JumpSpec {
                intensity: 2.0,
                scale: 0.5,
            }),
            ..ModelSpec::default()
        };
        let r = spec.resolve(11).unwrap();
        assert_eq!(r, spec.resolve(11).unwrap());
        let text = serde_json::to_string(&r).unwrap();
        let back: ResolvedModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        let m = back.to_model().unwrap();
        assert_eq!(m.dim(), 3);
        assert!(m.levy().has_jumps());
    }

    #[test]
    fn matrix_json_round_trips_exactly() {
        let m = Matrix::from_row_slice(2, 2, &[0.1, -1.0 / 3.0, 1e-300, 2.0f64.sqrt()]);
        let raw = matrix_json(&m);
        let rows: Vec<Vec<f64>> = serde_json::from_str(raw.get()).unwrap();
        assert_eq!(rows_to_matrix(&rows, "m").unwrap(), m);
    }

    #[test]
    fn experiment_kind_tag() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"kind":"re_probability","d":3,"reps":5}"#).unwrap();
        assert!(matches!(c, ExperimentConfig::ReProbability(ref r) if r.d == 3 && r.reps == 5));
        assert!(
            serde_json::from_str::<ExperimentConfig>(r#"{"kind":"re_probability","bogus":1}"#)
                .is_err()
        );
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"kind":"nope"}"#).is_err());
    }

    #[test]
    fn sibling_names() {
        assert_eq!(
            sibling(Path::new("out/rep.csv"), "_summary.csv"),
            PathBuf::from("out/rep_summary.csv")
        );
    }
}
