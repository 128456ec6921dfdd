mod common;

use sparselab::estimators::{fit_penalized, EstimatorKind, FitOptions, Objective, Penalty};
use sparselab::model::{generate_sparse_stable, LevySpec, OUModel};
use sparselab::numkit::{l1_norm, slope_norm, SlopeWeights};
use sparselab::simulate::{rng_from_seed, simulate_path, SimConfig, SimulatedPath};
use sparselab::stats::{compute_stats, compute_stats_range, FilteredIncrements};
use sparselab::tuning::{cross_validate, cv_score, log_grid, split_objectives, CVConfig, CvScore};
use sparselab::{Error, Matrix, Vector};

fn setup(d: usize, seed: u64) -> (OUModel, SimulatedPath, Vec<Vector>) {
    let a0 = generate_sparse_stable(d, 0.3, 1.0, &mut rng_from_seed(seed)).unwrap();
    let model = OUModel::new(a0, LevySpec::gaussian(Matrix::identity(d, d)).unwrap()).unwrap();
    let sim = simulate_path(&model, &SimConfig::new(60.0, 0.01, seed + 1)).unwrap();
    let incs = FilteredIncrements::unfiltered(&sim.path).increments;
    (model, sim, incs)
}

#[test]
fn single_point_grid_selects_it() {
    let (model, sim, incs) = setup(3, 1);
    let cfg = CVConfig {
        grid: vec![0.05],
        ..CVConfig::new(EstimatorKind::Lasso)
    };
    let out = cross_validate(
        &sim.path,
        &incs,
        model.sigma(),
        &cfg,
        &FitOptions::default(),
    )
    .unwrap();
    assert_eq!(out.lambda_hat, 0.05);
    assert_eq!(out.trace.len(), 1);
}

#[test]
fn zero_estimate_scores_infinity() {
    let (model, sim, incs) = setup(3, 2);
    let (_, valid) = split_objectives(&sim.path, &incs, model.sigma(), 0.8).unwrap();
    let w = SlopeWeights::for_matrix(3, 3).unwrap();
    for kind in [EstimatorKind::Lasso, EstimatorKind::Slope] {
        let row = cv_score(&valid, &Matrix::zeros(3, 3), kind, &w, CvScore::Normalized).unwrap();
        assert_eq!(row.score, f64::INFINITY);
        assert_eq!(row.nll_validation, 0.0);
    }
}

#[test]
fn over_penalized_grid_is_an_error() {
    let (model, sim, incs) = setup(3, 3);
    let cfg = CVConfig {
        grid: vec![1e6, 1e7],
        ..CVConfig::new(EstimatorKind::Slope)
    };
    let err = cross_validate(
        &sim.path,
        &incs,
        model.sigma(),
        &cfg,
        &FitOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::GridOverPenalizes));
}

#[test]
fn split_is_chronological() {
    let (model, sim, incs) = setup(2, 4);
    let (train, valid) = split_objectives(&sim.path, &incs, model.sigma(), 0.8).unwrap();
    let n = sim.path.steps();
    let cut = (0.8 * n as f64).round() as usize;
    assert_eq!(
        train.stats(),
        &compute_stats_range(&sim.path, &incs, 0..cut).unwrap()
    );
    assert_eq!(
        valid.stats(),
        &compute_stats_range(&sim.path, &incs, cut..n).unwrap()
    );
}

/// Cold-start refits at every grid point with an independently written score.
#[test]
fn selection_matches_exhaustive_reevaluation() {
    let (model, sim, incs) = setup(4, 5);
    let tight = FitOptions {
        tol: 1e-11,
        max_iter: 100_000,
        ..FitOptions::default()
    };
    let w = SlopeWeights::for_matrix(4, 4).unwrap();
    for kind in [EstimatorKind::Lasso, EstimatorKind::Slope] {
        for score in [CvScore::Normalized, CvScore::Likelihood] {
            let cfg = CVConfig {
                grid: log_grid(1e-3, 3.0, 12).unwrap(),
                score,
                ..CVConfig::new(kind)
            };
            let out = cross_validate(&sim.path, &incs, model.sigma(), &cfg, &tight).unwrap();

            let n = sim.path.steps();
            let cut = (0.8 * n as f64).round() as usize;
            let train = Objective::new(
                compute_stats_range(&sim.path, &incs, 0..cut).unwrap(),
                model.sigma(),
            )
            .unwrap();
            let v = compute_stats_range(&sim.path, &incs, cut..n).unwrap();
            let c_inv = (model.sigma() * model.sigma().transpose())
                .try_inverse()
                .unwrap();
            let mut scores = Vec::new();
            for &lambda in &cfg.grid {
                let penalty = match kind {
                    EstimatorKind::Slope => Penalty::Slope {
                        lambda,
                        weights: w.clone(),
                    },
                    _ => Penalty::Lasso { lambda },
                };
                let a = fit_penalized(&train, &penalty, &tight).unwrap().a_hat;
                let nll = (&c_inv * &a * v.g.transpose()).trace()
                    + 0.5 * (&c_inv * &a * &v.c_hat * a.transpose()).trace();
                let norm = match kind {
                    EstimatorKind::Slope => slope_norm(&a, &w).unwrap(),
                    _ => l1_norm(&a),
                };
                scores.push(match score {
                    CvScore::Likelihood => nll,
                    CvScore::Normalized if norm > 0.0 => nll / norm,
                    CvScore::Normalized => f64::INFINITY,
                });
            }
            for (row, s) in out.trace.iter().zip(&scores) {
                if s.is_finite() {
                    assert!(
                        (row.score - s).abs() < 1e-6 * (1.0 + s.abs()),
                        "{kind} {score:?}"
                    );
                } else {
                    assert_eq!(row.score, *s);
                }
            }
            let best = scores
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            assert_eq!(out.lambda_hat, cfg.grid[best], "{kind} {score:?}");
        }
    }
}

#[test]
fn refit_uses_the_full_path() {
    let (model, sim, incs) = setup(3, 6);
    let cfg = CVConfig {
        grid: log_grid(1e-2, 1.0, 6).unwrap(),
        refit_full: true,
        ..CVConfig::new(EstimatorKind::Lasso)
    };
    let opts = FitOptions {
        tol: 1e-11,
        ..FitOptions::default()
    };
    let out = cross_validate(&sim.path, &incs, model.sigma(), &cfg, &opts).unwrap();
    let full = Objective::new(compute_stats(&sim.path, &incs).unwrap(), model.sigma()).unwrap();
    let direct = fit_penalized(
        &full,
        &Penalty::Lasso {
            lambda: out.lambda_hat,
        },
        &opts,
    )
    .unwrap();
    assert!(common::max_abs_diff(&direct.a_hat, &out.result.a_hat) < 1e-8);
}

#[test]
fn short_paths_cannot_be_split() {
    let (model, sim, incs) = setup(3, 7);
    let short = sim.path.truncated(40);
    let err = split_objectives(&short, &incs[..40], model.sigma(), 0.8).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}
