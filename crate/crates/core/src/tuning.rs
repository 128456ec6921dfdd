//! Chronological cross-validation of the penalty level.
//!
//! The path is split once: the first `split_fraction` of the steps trains,
//! the rest validates. A candidate `λ` is scored by the validation
//! likelihood of the training fit divided by the penalty norm of that fit,
//! computed on `Â` itself. A fit that is exactly zero scores `+∞`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::estimators::{
    fit_penalized, nll, EstimatorKind, EstimatorResult, FitOptions, Objective, Penalty,
};
use crate::numkit::{count_nonzero, l1_norm, slope_norm, SlopeWeights};
use crate::simulate::{fmt_f64, SamplePath};
use crate::stats::compute_stats_range;
use crate::{Error, Matrix, Result, Vector};

/// Entries below this magnitude are not counted in `nnz` columns.
pub const NNZ_THRESHOLD: f64 = 1e-8;

pub const DEFAULT_GRID_SIZE: usize = 40;
pub const DEFAULT_GRID_MIN: f64 = 1e-3;
pub const DEFAULT_GRID_MAX: f64 = 10.0;

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(Error::invalid(format!(
            "bad grid [{lo}, {hi}] with {n} points"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = lo;
    grid[n - 1] = hi;
    Ok(grid)
}

fn default_split() -> f64 {
    0.8
}

fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_SIZE).expect("default grid is valid")
}

fn default_kind() -> EstimatorKind {
    EstimatorKind::Lasso
}

/// How a candidate is scored on the validation segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvScore {
    /// Validation likelihood divided by the penalty norm of the fit.
    #[default]
    Normalized,
    /// Plain validation likelihood.
    Likelihood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CVConfig {
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    /// Positive, strictly increasing.
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_kind")]
    pub kind: EstimatorKind,
    /// Refit on the whole path at the selected level instead of keeping
    /// the training fit.
    #[serde(default)]
    pub refit_full: bool,
    #[serde(default)]
    pub score: CvScore,
}

impl Default for CVConfig {
    fn default() -> Self {
        CVConfig {
            split_fraction: default_split(),
            grid: default_grid(),
            kind: default_kind(),
            refit_full: false,
            score: CvScore::Normalized,
        }
    }
}

impl CVConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        CVConfig {
            kind,
            ..CVConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("grid must not be empty".into()));
        }
        if self.grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Config(
                "grid values must be positive and finite".into(),
            ));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("grid must be strictly increasing".into()));
        }
        if self.kind == EstimatorKind::Mle {
            return Err(Error::Config(
                "cross-validation needs a penalized estimator".into(),
            ));
        }
        Ok(())
    }
}

/// One grid candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub lambda: f64,
    pub score: f64,
    pub nll_validation: f64,
    pub norm_of_estimate: f64,
    pub nnz: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub lambda_hat: f64,
    pub result: EstimatorResult,
    /// Rows in grid order.
    pub trace: Vec<CvRow>,
}

/// Training and validation objectives of a chronological split.
pub fn split_objectives(
    path: &SamplePath,
    filtered: &[Vector],
    sigma: &Matrix,
    split_fraction: f64,
) -> Result<(Objective, Objective)> {
    let n = path.steps();
    let d = path.dim();
    let n_train = (split_fraction * n as f64).round() as usize;
    if n_train < d * d || n - n_train.min(n) < d * d {
        return Err(Error::invalid(format!(
            "path of {n} steps too short to split: both segments need at least {} steps",
            d * d
        )));
    }
    let train = Objective::new(compute_stats_range(path, filtered, 0..n_train)?, sigma)?;
    let valid = Objective::new(compute_stats_range(path, filtered, n_train..n)?, sigma)?;
    Ok((train, valid))
}

/// Validation score of a fit. The normalized score is `+∞` for an all-zero
/// estimate.
pub fn cv_score(
    valid: &Objective,
    a_hat: &Matrix,
    kind: EstimatorKind,
    weights: &SlopeWeights,
    rule: CvScore,
) -> Result<CvRow> {
    let nll_validation = nll(valid, a_hat);
    let norm_of_estimate = match kind {
        EstimatorKind::Slope => slope_norm(a_hat, weights)?,
        _ => l1_norm(a_hat),
    };
    let score = match rule {
        CvScore::Likelihood => nll_validation,
        CvScore::Normalized if norm_of_estimate > 0.0 => nll_validation / norm_of_estimate,
        CvScore::Normalized => f64::INFINITY,
    };
    Ok(CvRow {
        lambda: f64::NAN,
        score,
        nll_validation,
        norm_of_estimate,
        nnz: count_nonzero(a_hat, NNZ_THRESHOLD),
    })
}

fn penalty_for(kind: EstimatorKind, lambda: f64, weights: &SlopeWeights) -> Penalty {
    match kind {
        EstimatorKind::Slope => Penalty::Slope {
            lambda,
            weights: weights.clone(),
        },
        _ => Penalty::Lasso { lambda },
    }
}

/// Selects `λ` from `cfg.grid` and returns the corresponding fit.
///
/// Candidates are fitted from the largest `λ` down, each warm-started at the
/// previous solution. Ties in the score go to the smaller grid index.
pub fn cross_validate(
    path: &SamplePath,
    filtered: &[Vector],
    sigma: &Matrix,
    cfg: &CVConfig,
    opts: &FitOptions,
) -> Result<CvOutcome> {
    cfg.validate()?;
    let d = path.dim();
    let weights = SlopeWeights::for_matrix(d, d)?;
    let (train, valid) = split_objectives(path, filtered, sigma, cfg.split_fraction)?;

    let mut fits: Vec<Option<(EstimatorResult, CvRow)>> = vec![None; cfg.grid.len()];
    let mut warm: Option<Matrix> = opts.init.clone();
    for (i, &lambda) in cfg.grid.iter().enumerate().rev() {
        let o = FitOptions {
            init: warm.take(),
            ..opts.clone()
        };
        let fit = fit_penalized(&train, &penalty_for(cfg.kind, lambda, &weights), &o)?;
        let mut row = cv_score(&valid, &fit.a_hat, cfg.kind, &weights, cfg.score)?;
        row.lambda = lambda;
        warm = Some(fit.a_hat.clone());
        fits[i] = Some((fit, row));
    }
    let fits: Vec<(EstimatorResult, CvRow)> = fits
        .into_iter()
        .map(|f| f.expect("every candidate fitted"))
        .collect();

    let best = fits
        .iter()
        .enumerate()
        .filter(|(_, (_, row))| row.score.is_finite())
        .min_by(|(i, (_, a)), (j, (_, b))| a.score.total_cmp(&b.score).then(i.cmp(j)))
        .map(|(i, _)| i)
        .ok_or(Error::GridOverPenalizes)?;
    let lambda_hat = cfg.grid[best];
    let trace: Vec<CvRow> = fits.iter().map(|(_, r)| r.clone()).collect();
    let mut result = fits
        .into_iter()
        .nth(best)
        .map(|(f, _)| f)
        .expect("index in range");

    if cfg.refit_full {
        let full = Objective::new(crate::stats::compute_stats(path, filtered)?, sigma)?;
        let o = FitOptions {
            init: Some(result.a_hat.clone()),
            ..opts.clone()
        };
        result = fit_penalized(&full, &penalty_for(cfg.kind, lambda_hat, &weights), &o)?;
    }
    Ok(CvOutcome {
        lambda_hat,
        result,
        trace,
    })
}

const TRACE_HEADER: [&str; 5] = [
    "lambda",
    "score",
    "nll_validation",
    "norm_of_estimate",
    "nnz",
];

/// Writes the trace as `lambda,score,nll_validation,norm_of_estimate,nnz`.
pub fn write_cv_trace<W: Write>(rows: &[CvRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.lambda),
            fmt_f64(r.score),
            fmt_f64(r.nll_validation),
            fmt_f64(r.norm_of_estimate),
            r.nnz.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cv_trace<R: Read>(input: R) -> Result<Vec<CvRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::invalid(format!(
            "unexpected CV trace header {header:?}"
        )));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::invalid(format!("bad number `{s}`")))
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(CvRow {
            lambda: num(&rec[0])?,
            score: num(&rec[1])?,
            nll_validation: num(&rec[2])?,
            norm_of_estimate: num(&rec[3])?,
            nnz: rec[4]
                .parse()
                .map_err(|_| Error::invalid(format!("bad count `{}`", &rec[4])))?,
        });
    }
    Ok(rows)
}
