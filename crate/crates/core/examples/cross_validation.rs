//! Chronological cross-validation of the penalty level, printing the trace.
//!
//! ```bash
//! cargo run --release -p sparselab --example cross_validation
//! ```

use sparselab::estimators::{EstimatorKind, FitOptions};
use sparselab::model::{generate_sparse_stable, LevySpec, OUModel};
use sparselab::simulate::{rng_from_seed, simulate_path, SimConfig};
use sparselab::stats::FilteredIncrements;
use sparselab::tuning::{cross_validate, write_cv_trace, CVConfig, CvScore};
use sparselab::Matrix;

fn main() -> sparselab::Result<()> {
    let d = 6;
    let a0 = generate_sparse_stable(d, 0.2, 1.0, &mut rng_from_seed(4))?;
    let model = OUModel::new(a0.clone(), LevySpec::gaussian(Matrix::identity(d, d))?)?;
    let sim = simulate_path(&model, &SimConfig::new(100.0, 0.01, 5))?;
    let incs = FilteredIncrements::unfiltered(&sim.path).increments;

    for score in [CvScore::Normalized, CvScore::Likelihood] {
        let cfg = CVConfig {
            score,
            ..CVConfig::new(EstimatorKind::Slope)
        };
        let out = cross_validate(
            &sim.path,
            &incs,
            model.sigma(),
            &cfg,
            &FitOptions::default(),
        )?;
        println!(
            "{score:?}: lambda_hat = {:.4}, L2 error = {:.3}",
            out.lambda_hat,
            (&out.result.a_hat - a0.as_matrix()).norm()
        );
        if score == CvScore::Normalized {
            write_cv_trace(&out.trace[..5], std::io::stdout())?;
        }
    }
    Ok(())
}
