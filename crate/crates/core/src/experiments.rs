//! Monte Carlo drivers.
//!
//! Every replication derives its own seed from the master seed and its
//! index, so rows do not depend on thread scheduling.

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::{
    fit_slope, mle, theoretical_lambda, EstimatorKind, FitOptions, Objective, TuningParams,
};
use crate::model::{generate_sparse_stable, stationary_moments, LevySpec, OUModel};
use crate::numkit::{l1_norm, norm_s, SlopeWeights};
use crate::simulate::{
    fmt_f64, rng_from_seed, simulate_path, split_seed, SimConfig, SimulatedPath,
};
use crate::stats::{
    check_q_event, compute_stats, compute_stats_range, epsilon_t, filter_jumps, q_deviation,
    re_constant, sigma_max, steps_for, FilterRule, FilteredIncrements,
};
use crate::tuning::{cross_validate, CVConfig, NNZ_THRESHOLD};
use crate::{Error, Matrix, Result, Vector};

/// Which increments feed the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncrementSource {
    /// Threshold-filtered observed increments.
    #[default]
    Filtered,
    /// True continuous increments from the simulation record.
    Recorded,
}

fn d_delta() -> f64 {
    crate::simulate::DEFAULT_DELTA
}
fn d_density() -> f64 {
    0.2
}
fn d_one() -> f64 {
    1.0
}
fn d_true() -> bool {
    true
}
fn d_mild() -> f64 {
    0.3
}

/// Estimator comparison across dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    #[serde(default = "ComparisonConfig::d_dims")]
    pub dims: Vec<usize>,
    #[serde(rename = "T", default = "ComparisonConfig::d_horizon")]
    pub horizon: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_density")]
    pub density: f64,
    /// Off-diagonal entries of `A₀` are uniform in `[−magnitude, magnitude]`.
    #[serde(default = "d_one")]
    pub magnitude: f64,
    /// Diagonal entries of `Σ` are uniform in this range.
    #[serde(default = "ComparisonConfig::d_sigma_range")]
    pub sigma_range: [f64; 2],
    #[serde(default = "ComparisonConfig::d_intensity")]
    pub jump_intensity: f64,
    #[serde(default = "d_one")]
    pub jump_scale: f64,
    #[serde(default = "ComparisonConfig::d_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub increments: IncrementSource,
    #[serde(default = "ComparisonConfig::d_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub cv: CVConfig,
    #[serde(default)]
    pub burn_in: Option<f64>,
}

impl ComparisonConfig {
    fn d_dims() -> Vec<usize> {
        vec![10, 15, 20]
    }
    fn d_horizon() -> f64 {
        100.0
    }
    fn d_sigma_range() -> [f64; 2] {
        [0.0, 10.0]
    }
    fn d_intensity() -> f64 {
        5.0
    }
    fn d_reps() -> usize {
        10
    }
    fn d_estimators() -> Vec<EstimatorKind> {
        vec![
            EstimatorKind::Mle,
            EstimatorKind::Lasso,
            EstimatorKind::Slope,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::Config("dims must be nonempty and positive".into()));
        }
        SimConfig::new(self.horizon, self.delta, 0).validate()?;
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::Config("density must lie in [0, 1]".into()));
        }
        let [lo, hi] = self.sigma_range;
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Config(
                "sigma_range must satisfy 0 <= lo < hi".into(),
            ));
        }
        if !(self.jump_intensity >= 0.0 && self.jump_scale > 0.0) {
            return Err(Error::Config(
                "jump intensity must be >= 0 and scale > 0".into(),
            ));
        }
        if self.reps == 0 || self.estimators.is_empty() {
            return Err(Error::Config("reps and estimators must be nonempty".into()));
        }
        self.cv.validate_grid()
    }
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl CVConfig {
    /// Checks everything except the estimator kind, which experiments set
    /// per fit.
    fn validate_grid(&self) -> Result<()> {
        CVConfig {
            kind: EstimatorKind::Lasso,
            ..self.clone()
        }
        .validate()
    }
}

/// Raw result of one estimator on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub d: usize,
    pub horizon: f64,
    pub replication: usize,
    pub estimator: EstimatorKind,
    pub l1_error: f64,
    pub l2_error: f64,
    /// Errors of `Σ⁻¹(Â − A₀)`.
    pub l1_weighted: f64,
    pub l2_weighted: f64,
    pub nnz: usize,
    pub lambda_used: f64,
    pub seed: u64,
    pub failed: bool,
}

/// Mean and sample standard deviation over the non-failed rows of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub d: usize,
    pub horizon: f64,
    pub estimator: EstimatorKind,
    pub n: usize,
    pub failed: usize,
    pub mean_l1: f64,
    pub sd_l1: f64,
    pub mean_l2: f64,
    pub sd_l2: f64,
    pub mean_l2_weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<AggregateRow>,
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ExperimentReport {
    /// Builds the report, computing aggregates per `(d, T, estimator)` in
    /// order of first appearance.
    pub fn from_rows(rows: Vec<ReportRow>) -> Self {
        let mut keys: Vec<(usize, f64, EstimatorKind)> = Vec::new();
        for r in &rows {
            let k = (r.d, r.horizon, r.estimator);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let aggregates = keys
            .into_iter()
            .map(|(d, horizon, estimator)| {
                let cell: Vec<&ReportRow> = rows
                    .iter()
                    .filter(|r| r.d == d && r.horizon == horizon && r.estimator == estimator)
                    .collect();
                let ok: Vec<&&ReportRow> = cell.iter().filter(|r| !r.failed).collect();
                let pick = |f: fn(&ReportRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
                let (mean_l1, sd_l1) = mean_sd(&pick(|r| r.l1_error));
                let (mean_l2, sd_l2) = mean_sd(&pick(|r| r.l2_error));
                let (mean_l2_weighted, _) = mean_sd(&pick(|r| r.l2_weighted));
                AggregateRow {
                    d,
                    horizon,
                    estimator,
                    n: ok.len(),
                    failed: cell.len() - ok.len(),
                    mean_l1,
                    sd_l1,
                    mean_l2,
                    sd_l2,
                    mean_l2_weighted,
                }
            })
            .collect();
        ExperimentReport { rows, aggregates }
    }

    pub fn aggregate(&self, d: usize, estimator: EstimatorKind) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.d == d && a.estimator == estimator)
    }

    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ROW_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.d.to_string(),
                fmt_f64(r.horizon),
                r.replication.to_string(),
                r.estimator.to_string(),
                fmt_f64(r.l1_error),
                fmt_f64(r.l2_error),
                fmt_f64(r.l1_weighted),
                fmt_f64(r.l2_weighted),
                r.nnz.to_string(),
                fmt_f64(r.lambda_used),
                r.seed.to_string(),
                u8::from(r.failed).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "d",
            "T",
            "estimator",
            "n",
            "failed",
            "mean_l1",
            "sd_l1",
            "mean_l2",
            "sd_l2",
            "mean_l2_weighted",
        ])?;
        for a in &self.aggregates {
            w.write_record([
                a.d.to_string(),
                fmt_f64(a.horizon),
                a.estimator.to_string(),
                a.n.to_string(),
                a.failed.to_string(),
                fmt_f64(a.mean_l1),
                fmt_f64(a.sd_l1),
                fmt_f64(a.mean_l2),
                fmt_f64(a.sd_l2),
                fmt_f64(a.mean_l2_weighted),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads raw rows back and recomputes the aggregates.
    pub fn read_rows_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        if header.iter().ne(ROW_HEADER) {
            return Err(Error::invalid(format!(
                "unexpected report header {header:?}"
            )));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            rows.push(ReportRow {
                d: parse(&rec[0])?,
                horizon: parse(&rec[1])?,
                replication: parse(&rec[2])?,
                estimator: rec[3].parse()?,
                l1_error: parse(&rec[4])?,
                l2_error: parse(&rec[5])?,
                l1_weighted: parse(&rec[6])?,
                l2_weighted: parse(&rec[7])?,
                nnz: parse(&rec[8])?,
                lambda_used: parse(&rec[9])?,
                seed: parse(&rec[10])?,
                failed: parse::<u8>(&rec[11])? != 0,
            });
        }
        Ok(Self::from_rows(rows))
    }
}

const ROW_HEADER: [&str; 12] = [
    "d",
    "T",
    "replication",
    "estimator",
    "l1_error",
    "l2_error",
    "l1_weighted",
    "l2_weighted",
    "nnz",
    "lambda_used",
    "seed",
    "failed",
];

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("cannot parse `{s}`")))
}

#[allow(clippy::too_many_arguments)]
fn error_row(
    d: usize,
    horizon: f64,
    replication: usize,
    estimator: EstimatorKind,
    seed: u64,
    a0: &Matrix,
    sigma_inv: &Matrix,
    fit: Result<(Matrix, f64, bool)>,
) -> ReportRow {
    match fit {
        Ok((a_hat, lambda_used, converged)) => {
            let diff = &a_hat - a0;
            let weighted = sigma_inv * &diff;
            ReportRow {
                d,
                horizon,
                replication,
                estimator,
                l1_error: l1_norm(&diff),
                l2_error: diff.norm(),
                l1_weighted: l1_norm(&weighted),
                l2_weighted: weighted.norm(),
                nnz: crate::numkit::count_nonzero(&a_hat, NNZ_THRESHOLD),
                lambda_used,
                seed,
                failed: !converged,
            }
        }
        Err(_) => ReportRow {
            d,
            horizon,
            replication,
            estimator,
            l1_error: f64::NAN,
            l2_error: f64::NAN,
            l1_weighted: f64::NAN,
            l2_weighted: f64::NAN,
            nnz: 0,
            lambda_used: f64::NAN,
            seed,
            failed: true,
        },
    }
}

fn diagonal_sigma<R: Rng + ?Sized>(d: usize, [lo, hi]: [f64; 2], rng: &mut R) -> Matrix {
    let mut s = Matrix::zeros(d, d);
    for i in 0..d {
        let mut v = rng.random_range(lo..hi);
        while v == 0.0 {
            v = rng.random_range(lo..hi);
        }
        s[(i, i)] = v;
    }
    s
}

/// Everything one comparison replication needs to be regenerated.
#[derive(Debug, Clone)]
pub struct ComparisonInstance {
    pub model: OUModel,
    pub sim: SimulatedPath,
    pub increments: Vec<Vector>,
    pub seed: u64,
}

/// Draws `A₀`, `Σ` and the path of replication `(dim_index, rep)`.
pub fn comparison_instance(
    cfg: &ComparisonConfig,
    dim_index: usize,
    rep: usize,
) -> Result<ComparisonInstance> {
    let d = cfg.dims[dim_index];
    let seed = split_seed(cfg.seed, (dim_index * cfg.reps + rep) as u64);
    let mut rng = rng_from_seed(seed);
    let a0 = generate_sparse_stable(d, cfg.density, cfg.magnitude, &mut rng)?;
    let sigma = diagonal_sigma(d, cfg.sigma_range, &mut rng);
    let levy = if cfg.jump_intensity > 0.0 {
        LevySpec::with_laplace_jumps(sigma, cfg.jump_intensity, cfg.jump_scale)?
    } else {
        LevySpec::gaussian(sigma)?
    };
    let model = OUModel::new(a0, levy)?;
    let sim_cfg = SimConfig {
        horizon: cfg.horizon,
        delta: cfg.delta,
        burn_in: cfg.burn_in,
        seed: rng.next_u64(),
    };
    let sim = simulate_path(&model, &sim_cfg)?;
    let increments = match cfg.increments {
        IncrementSource::Recorded => sim.continuous_increments(),
        IncrementSource::Filtered if model.levy().has_jumps() => {
            filter_jumps(&sim.path, &FilterRule::default(), sigma_max(model.sigma()))?.increments
        }
        IncrementSource::Filtered => FilteredIncrements::unfiltered(&sim.path).increments,
    };
    Ok(ComparisonInstance {
        model,
        sim,
        increments,
        seed,
    })
}

/// MLE on the whole path; Lasso and Slope tuned by chronological
/// cross-validation and fitted on the training segment.
pub fn run_comparison(cfg: &ComparisonConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.dims.len())
        .flat_map(|i| (0..cfg.reps).map(move |r| (i, r)))
        .collect();
    let rows: Vec<Vec<ReportRow>> = jobs
        .par_iter()
        .map(|&(di, rep)| -> Result<Vec<ReportRow>> {
            let inst = comparison_instance(cfg, di, rep)?;
            let d = cfg.dims[di];
            let a0 = inst.model.drift().as_matrix();
            let sigma = inst.model.sigma();
            let sigma_inv = sigma
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::invalid("singular Σ"))?;
            Ok(cfg
                .estimators
                .iter()
                .map(|&kind| {
                    let fit = match kind {
                        EstimatorKind::Mle => compute_stats(&inst.sim.path, &inst.increments)
                            .and_then(|s| Objective::new(s, sigma))
                            .and_then(|o| mle(&o))
                            .map(|r| (r.a_hat, 0.0, r.converged)),
                        _ => {
                            let cv = CVConfig {
                                kind,
                                ..cfg.cv.clone()
                            };
                            cross_validate(
                                &inst.sim.path,
                                &inst.increments,
                                sigma,
                                &cv,
                                &FitOptions::default(),
                            )
                            .map(|o| (o.result.a_hat, o.lambda_hat, o.result.converged))
                        }
                    };
                    error_row(d, cfg.horizon, rep, kind, inst.seed, a0, &sigma_inv, fit)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentReport::from_rows(
        rows.into_iter().flatten().collect(),
    ))
}

/// Gaussian model with sparse stable drift and `Σ = σ·Id`.
fn gaussian_model<R: Rng + ?Sized>(
    d: usize,
    density: f64,
    magnitude: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<OUModel> {
    let a0 = generate_sparse_stable(d, density, magnitude, rng)?;
    OUModel::new(a0, LevySpec::gaussian(Matrix::identity(d, d) * sigma)?)
}

/// Slope at the theoretical penalty level across horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCheckConfig {
    #[serde(default = "RateCheckConfig::d_dim")]
    pub d: usize,
    #[serde(default = "RateCheckConfig::d_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_density")]
    pub density: f64,
    #[serde(default = "d_one")]
    pub magnitude: f64,
    #[serde(default = "d_one")]
    pub sigma: f64,
    #[serde(default = "RateCheckConfig::d_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "RateCheckConfig::d_tuning")]
    pub tuning: TuningParams,
}

impl RateCheckConfig {
    fn d_dim() -> usize {
        10
    }
    fn d_horizons() -> Vec<f64> {
        vec![100.0, 200.0, 400.0]
    }
    fn d_reps() -> usize {
        20
    }
    /// Small enough that the estimate at the shortest horizon is not
    /// shrunk to zero.
    fn d_tuning() -> TuningParams {
        TuningParams::with_c0(0.01)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.reps == 0 {
            return Err(Error::Config("d and reps must be positive".into()));
        }
        if self.horizons.len() < 3 {
            return Err(Error::Config("rate check needs at least 3 horizons".into()));
        }
        if self
            .horizons
            .windows(2)
            .any(|w| !(w[0] > 0.0 && w[1] > w[0]))
        {
            return Err(Error::Config(
                "horizons must be positive and increasing".into(),
            ));
        }
        if !(self.sigma > 0.0 && self.tuning.c0 > 0.0) {
            return Err(Error::Config("sigma and c0 must be positive".into()));
        }
        SimConfig::new(self.horizons[0], self.delta, 0).validate()
    }
}

impl Default for RateCheckConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub horizon: f64,
    pub lambda: f64,
    pub median_sq_error: f64,
    /// `err²·T·κ_min² / (s·log(2e·d²/s))`.
    pub normalized: f64,
    pub reps: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub sparsity: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub table: Vec<RateRow>,
    pub raw: ExperimentReport,
}

impl RateReport {
    /// `median err²(T_i) / median err²(T_{i+1})` for consecutive horizons.
    pub fn ratios(&self) -> Vec<f64> {
        self.table
            .windows(2)
            .map(|w| w[0].median_sq_error / w[1].median_sq_error)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "T",
            "lambda",
            "median_sq_error",
            "normalized",
            "reps",
            "failed",
        ])?;
        for r in &self.table {
            w.write_record([
                fmt_f64(r.horizon),
                fmt_f64(r.lambda),
                fmt_f64(r.median_sq_error),
                fmt_f64(r.normalized),
                r.reps.to_string(),
                r.failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Vec<RateRow>> {
        let mut rd = csv::Reader::from_reader(input);
        rd.records()
            .map(|rec| {
                let rec = rec?;
                Ok(RateRow {
                    horizon: parse(&rec[0])?,
                    lambda: parse(&rec[1])?,
                    median_sq_error: parse(&rec[2])?,
                    normalized: parse(&rec[3])?,
                    reps: parse(&rec[4])?,
                    failed: parse(&rec[5])?,
                })
            })
            .collect()
    }
}

/// One drift matrix is drawn from the seed; each replication simulates to
/// the longest horizon and is fitted on its prefixes.
pub fn run_rate_check(cfg: &RateCheckConfig) -> Result<RateReport> {
    cfg.validate()?;
    let d = cfg.d;
    let mut rng = rng_from_seed(split_seed(cfg.seed, u64::MAX));
    let model = gaussian_model(d, cfg.density, cfg.magnitude, cfg.sigma, &mut rng)?;
    let moments = stationary_moments(&model)?;
    let a0 = model.drift().as_matrix().clone();
    let sigma = model.sigma().clone();
    let sigma_inv = sigma
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("singular Σ"))?;
    let s = crate::numkit::count_nonzero(&(&sigma_inv * &a0), 0.0).max(1);
    let weights = SlopeWeights::for_matrix(d, d)?;
    let t_max = *cfg.horizons.last().expect("validated nonempty");
    let lambdas: Vec<f64> = cfg
        .horizons
        .iter()
        .map(|&t| {
            theoretical_lambda(
                EstimatorKind::Slope,
                moments.kappa_max,
                t,
                d,
                None,
                &cfg.tuning,
            )
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<ReportRow>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<ReportRow>> {
            let seed = split_seed(cfg.seed, rep as u64);
            let sim = simulate_path(&model, &SimConfig::new(t_max, cfg.delta, seed))?;
            let incs = sim.path.increments();
            Ok(cfg
                .horizons
                .iter()
                .zip(&lambdas)
                .map(|(&t, &lambda)| {
                    let n = steps_for(t, cfg.delta).min(sim.path.steps());
                    let fit = compute_stats_range(&sim.path, &incs, 0..n)
                        .and_then(|st| Objective::new(st, &sigma))
                        .and_then(|o| fit_slope(&o, lambda, &weights, &FitOptions::default()))
                        .map(|r| (r.a_hat, lambda, r.converged));
                    error_row(d, t, rep, EstimatorKind::Slope, seed, &a0, &sigma_inv, fit)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let raw = ExperimentReport::from_rows(rows.into_iter().flatten().collect());

    let log_term = (2.0 * std::f64::consts::E * (d * d) as f64 / s as f64).ln();
    let table = cfg
        .horizons
        .iter()
        .zip(&lambdas)
        .map(|(&t, &lambda)| {
            let cell: Vec<&ReportRow> = raw.rows.iter().filter(|r| r.horizon == t).collect();
            let sq: Vec<f64> = cell
                .iter()
                .filter(|r| !r.failed)
                .map(|r| r.l2_weighted.powi(2))
                .collect();
            let m = median(&sq);
            RateRow {
                horizon: t,
                lambda,
                median_sq_error: m,
                normalized: m * t * moments.kappa_min.powi(2) / (s as f64 * log_term),
                reps: sq.len(),
                failed: cell.len() - sq.len(),
            }
        })
        .collect();
    Ok(RateReport {
        sparsity: s,
        kappa_min: moments.kappa_min,
        kappa_max: moments.kappa_max,
        table,
        raw,
    })
}

/// Frequency of the event `‖Ĉ_T − C_∞‖ ≤ r` with `r = radius_factor·κ_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReProbabilityConfig {
    #[serde(default = "ReProbabilityConfig::d_dim")]
    pub d: usize,
    #[serde(default = "ReProbabilityConfig::d_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_density")]
    pub density: f64,
    #[serde(default = "d_mild")]
    pub magnitude: f64,
    #[serde(default = "d_one")]
    pub sigma: f64,
    #[serde(default = "ReProbabilityConfig::d_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "ReProbabilityConfig::d_radius")]
    pub radius_factor: f64,
}

impl ReProbabilityConfig {
    fn d_dim() -> usize {
        4
    }
    fn d_horizons() -> Vec<f64> {
        vec![50.0, 200.0, 500.0, 2000.0]
    }
    fn d_reps() -> usize {
        50
    }
    fn d_radius() -> f64 {
        0.5
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.reps == 0 || self.horizons.is_empty() {
            return Err(Error::Config(
                "d, reps and horizons must be nonempty".into(),
            ));
        }
        if self.horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("horizons must be positive".into()));
        }
        if !(self.radius_factor > 0.0 && self.sigma > 0.0) {
            return Err(Error::Config(
                "radius_factor and sigma must be positive".into(),
            ));
        }
        SimConfig::new(self.horizons[0], self.delta, 0).validate()
    }
}

impl Default for ReProbabilityConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReRow {
    pub horizon: f64,
    pub frequency: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReReport {
    pub kappa_min: f64,
    pub radius: f64,
    pub rows: Vec<ReRow>,
    /// `‖Ĉ_T − C_∞‖` per replication and horizon.
    pub deviations: Vec<Vec<f64>>,
}

impl ReReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["T", "frequency", "reps"])?;
        for r in &self.rows {
            w.write_record([fmt_f64(r.horizon), fmt_f64(r.frequency), r.reps.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Vec<ReRow>> {
        let mut rd = csv::Reader::from_reader(input);
        rd.records()
            .map(|rec| {
                let rec = rec?;
                Ok(ReRow {
                    horizon: parse(&rec[0])?,
                    frequency: parse(&rec[1])?,
                    reps: parse(&rec[2])?,
                })
            })
            .collect()
    }
}

/// Runs the Q-event frequency table. Every evaluated path is also checked
/// for `Q_T(r) ⇒ λ_min(Ĉ_T) ≥ κ_min − r`; a violation is an error.
pub fn run_re_probability(cfg: &ReProbabilityConfig) -> Result<ReReport> {
    cfg.validate()?;
    let mut rng = rng_from_seed(split_seed(cfg.seed, u64::MAX));
    let model = gaussian_model(cfg.d, cfg.density, cfg.magnitude, cfg.sigma, &mut rng)?;
    let moments = stationary_moments(&model)?;
    let radius = cfg.radius_factor * moments.kappa_min;
    let t_max = cfg.horizons.iter().copied().fold(0.0, f64::max);

    let per_rep: Vec<Vec<(bool, f64)>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<(bool, f64)>> {
            let sim = simulate_path(
                &model,
                &SimConfig::new(t_max, cfg.delta, split_seed(cfg.seed, rep as u64)),
            )?;
            let incs = sim.path.increments();
            cfg.horizons
                .iter()
                .map(|&t| {
                    let n = steps_for(t, cfg.delta).min(sim.path.steps());
                    let stats = compute_stats_range(&sim.path, &incs, 0..n)?;
                    let event = check_q_event(&stats, &moments.c_inf, radius)?;
                    let floor = moments.kappa_min - radius;
                    let re = re_constant(&stats)?;
                    if event && re < floor - 1e-12 * moments.kappa_max {
                        return Err(Error::invalid(format!(
                            "inclusion violated at T={t}: λ_min(Ĉ_T)={re} < {floor}"
                        )));
                    }
                    Ok((event, q_deviation(&stats, &moments.c_inf)?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let rows = cfg
        .horizons
        .iter()
        .enumerate()
        .map(|(ti, &t)| ReRow {
            horizon: t,
            frequency: per_rep.iter().filter(|r| r[ti].0).count() as f64 / cfg.reps as f64,
            reps: cfg.reps,
        })
        .collect();
    Ok(ReReport {
        kappa_min: moments.kappa_min,
        radius,
        rows,
        deviations: per_rep
            .iter()
            .map(|r| r.iter().map(|x| x.1).collect())
            .collect(),
    })
}

/// Dictionary check of the stochastic-error deviation event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationConfig {
    #[serde(default = "DeviationConfig::d_dim")]
    pub d: usize,
    #[serde(rename = "T", default = "DeviationConfig::d_horizon")]
    pub horizon: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "DeviationConfig::d_eps0")]
    pub eps0: f64,
    #[serde(default = "d_one")]
    pub c0: f64,
    #[serde(default = "DeviationConfig::d_dictionary")]
    pub dictionary_size: usize,
    #[serde(default = "DeviationConfig::d_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_density")]
    pub density: f64,
    #[serde(default = "d_mild")]
    pub magnitude: f64,
    #[serde(default = "d_one")]
    pub sigma: f64,
    /// Include the signed copy `−B` of every dictionary element.
    #[serde(default = "d_true")]
    pub symmetric: bool,
}

impl DeviationConfig {
    fn d_dim() -> usize {
        5
    }
    fn d_horizon() -> f64 {
        500.0
    }
    fn d_eps0() -> f64 {
        0.1
    }
    fn d_dictionary() -> usize {
        500
    }
    fn d_reps() -> usize {
        100
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.reps == 0 {
            return Err(Error::Config("d and reps must be positive".into()));
        }
        if self.dictionary_size < 500 {
            return Err(Error::Config("dictionary_size must be at least 500".into()));
        }
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(Error::Config("eps0 must lie in (0, 1)".into()));
        }
        if !(self.c0 > 0.0 && self.sigma > 0.0) {
            return Err(Error::Config("c0 and sigma must be positive".into()));
        }
        SimConfig::new(self.horizon, self.delta, 0).validate()
    }
}

impl Default for DeviationConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// Random matrices whose support sizes cycle through `1..=d²`, Gaussian
/// entries on a uniformly drawn support.
pub fn random_dictionary(d: usize, size: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = rng_from_seed(seed);
    let m = d * d;
    (0..size)
        .map(|i| {
            let k = 1 + i % m;
            let mut b = Matrix::zeros(d, d);
            for idx in sample(&mut rng, m, k) {
                let mut v: f64 = rng.sample(StandardNormal);
                while v == 0.0 {
                    v = rng.sample(StandardNormal);
                }
                b[(idx % d, idx / d)] = v;
            }
            b
        })
        .collect()
}

/// `max_B ⟨ε, B⟩ / ‖B‖_S` over the dictionary (absolute value when
/// `symmetric`).
pub fn dictionary_statistic(
    eps: &Matrix,
    dictionary: &[Matrix],
    eps0: f64,
    w: &SlopeWeights,
    symmetric: bool,
) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for b in dictionary {
        let ip = eps.dot(b);
        let ip = if symmetric { ip.abs() } else { ip };
        best = best.max(ip / norm_s(b, eps0, w)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRow {
    pub replication: usize,
    pub statistic: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    /// `c_*·sqrt(κ_max/T)`.
    pub threshold: f64,
    pub eps0: f64,
    pub rows: Vec<DeviationRow>,
}

pub const DEVIATION_NOTE: &str =
    "dictionary maximum is a lower bound of the supremum; a low violation frequency is necessary, not sufficient";

impl DeviationReport {
    pub fn violation_frequency(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.violated).count() as f64 / self.rows.len() as f64
    }

    /// CSV with a leading `#` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# {DEVIATION_NOTE}; threshold={}; eps0={}; violation_frequency={}",
            fmt_f64(self.threshold),
            fmt_f64(self.eps0),
            fmt_f64(self.violation_frequency())
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replication", "statistic", "threshold", "violated"])?;
        for r in &self.rows {
            w.write_record([
                r.replication.to_string(),
                fmt_f64(r.statistic),
                fmt_f64(self.threshold),
                u8::from(r.violated).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Vec<(DeviationRow, f64)>> {
        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        rd.records()
            .map(|rec| {
                let rec = rec?;
                Ok((
                    DeviationRow {
                        replication: parse(&rec[0])?,
                        statistic: parse(&rec[1])?,
                        violated: parse::<u8>(&rec[3])? != 0,
                    },
                    parse(&rec[2])?,
                ))
            })
            .collect()
    }
}

pub fn run_deviation_check(cfg: &DeviationConfig) -> Result<DeviationReport> {
    cfg.validate()?;
    let d = cfg.d;
    let mut rng = rng_from_seed(split_seed(cfg.seed, u64::MAX));
    let model = gaussian_model(d, cfg.density, cfg.magnitude, cfg.sigma, &mut rng)?;
    let moments = stationary_moments(&model)?;
    let dictionary = random_dictionary(d, cfg.dictionary_size, split_seed(cfg.seed, u64::MAX - 1));
    let w = SlopeWeights::for_matrix(d, d)?;
    let threshold =
        TuningParams::with_c0(cfg.c0).c_star() * (moments.kappa_max / cfg.horizon).sqrt();
    let sigma = model.sigma().clone();
    let rows = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<DeviationRow> {
            let sim = simulate_path(
                &model,
                &SimConfig::new(cfg.horizon, cfg.delta, split_seed(cfg.seed, rep as u64)),
            )?;
            let eps = epsilon_t(&sim, &sigma)?;
            let statistic = dictionary_statistic(&eps, &dictionary, cfg.eps0, &w, cfg.symmetric)?;
            Ok(DeviationRow {
                replication: rep,
                statistic,
                violated: statistic > threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeviationReport {
        threshold,
        eps0: cfg.eps0,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_and_median() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn configs_have_documented_defaults() {
        let c = ComparisonConfig::default();
        assert_eq!(c.dims, vec![10, 15, 20]);
        assert_eq!(c.horizon, 100.0);
        assert_eq!(c.sigma_range, [0.0, 10.0]);
        assert_eq!(c.jump_intensity, 5.0);
        assert_eq!(c.cv.grid.len(), 40);
        assert!(c.validate().is_ok());
        assert!(RateCheckConfig::default().validate().is_ok());
        assert!(ReProbabilityConfig::default().validate().is_ok());
        assert!(DeviationConfig::default().validate().is_ok());
        assert!(serde_json::from_str::<RateCheckConfig>(r#"{"dims":[3]}"#).is_err());
    }

    #[test]
    fn dictionary_ratio_is_scale_free() {
        let w = SlopeWeights::for_matrix(3, 3).unwrap();
        let dict = random_dictionary(3, 50, 7);
        let eps = Matrix::from_fn(3, 3, |i, j| (i as f64 - j as f64) * 0.1 + 0.05);
        let doubled: Vec<Matrix> = dict.iter().map(|b| b * 2.0).collect();
        let a = dictionary_statistic(&eps, &dict, 0.1, &w, true).unwrap();
        let b = dictionary_statistic(&eps, &doubled, 0.1, &w, true).unwrap();
        assert!((a - b).abs() <= 1e-14 * a.abs());
        let zero = dictionary_statistic(&Matrix::zeros(3, 3), &dict, 0.1, &w, true).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn dictionary_mixes_sparsity() {
        let dict = random_dictionary(4, 32, 1);
        let counts: Vec<usize> = dict
            .iter()
            .map(|b| crate::numkit::count_nonzero(b, 0.0))
            .collect();
        assert_eq!(counts[0], 1);
        assert_eq!(counts[15], 16);
        assert_eq!(counts[16], 1);
    }
}
