//! MLE, Lasso and Slope on one Gaussian path at fixed penalty levels.
//!
//! ```bash
//! cargo run --release -p sparselab --example fit_estimators
//! ```

use sparselab::estimators::{fit_lasso, fit_slope, mle, FitOptions, Objective};
use sparselab::model::{generate_sparse_stable, LevySpec, OUModel};
use sparselab::numkit::{count_nonzero, l1_norm, SlopeWeights};
use sparselab::simulate::{rng_from_seed, simulate_path, SimConfig};
use sparselab::stats::{compute_stats, FilteredIncrements};
use sparselab::Matrix;

fn main() -> sparselab::Result<()> {
    let d = 8;
    let a0 = generate_sparse_stable(d, 0.15, 1.0, &mut rng_from_seed(1))?;
    let model = OUModel::new(a0.clone(), LevySpec::gaussian(Matrix::identity(d, d))?)?;
    let sim = simulate_path(&model, &SimConfig::new(100.0, 0.01, 2))?;
    let incs = FilteredIncrements::unfiltered(&sim.path).increments;
    let obj = Objective::new(compute_stats(&sim.path, &incs)?, model.sigma())?;

    let report = |name: &str, a: &Matrix| {
        let e = a - a0.as_matrix();
        println!(
            "{name:>6}: L1 {:7.3}  L2 {:6.3}  nnz {:3} / {}",
            l1_norm(&e),
            e.norm(),
            count_nonzero(a, 1e-8),
            a0.nnz()
        );
    };
    report("mle", &mle(&obj)?.a_hat);
    let opts = FitOptions::default();
    let lasso = fit_lasso(&obj, 0.1, &opts)?;
    report("lasso", &lasso.a_hat);
    let slope = fit_slope(&obj, 0.05, &SlopeWeights::for_matrix(d, d)?, &opts)?;
    report("slope", &slope.a_hat);
    println!(
        "lasso: {} iterations, residual {:.1e}",
        lasso.iterations, lasso.optimality_residual
    );
    Ok(())
}
