//! Restricted-eigenvalue diagnostics: the Q event, lambda_min of the sample
//! covariance and an empirical concentration table against the Gaussian
//! bound.
//!
//! ```bash
//! cargo run --release -p sparselab --example re_diagnostics
//! ```

use sparselab::model::{stationary_moments, DriftMatrix, LevySpec, OUModel};
use sparselab::simulate::{simulate_path, SimConfig};
use sparselab::stats::{
    check_q_event, compute_stats, empirical_concentration, gaussian_concentration_bound,
    q_deviation, re_constant, FilteredIncrements, SpectralConstants,
};
use sparselab::Matrix;

fn main() -> sparselab::Result<()> {
    let a = DriftMatrix::from_row_slice(3, &[1.0, 0.2, 0.0, 0.0, 1.5, 0.2, 0.0, 0.0, 2.0])?;
    let model = OUModel::new(a.clone(), LevySpec::gaussian(Matrix::identity(3, 3))?)?;
    let m = stationary_moments(&model)?;

    let sim = simulate_path(&model, &SimConfig::new(500.0, 0.01, 3))?;
    let stats = compute_stats(
        &sim.path,
        &FilteredIncrements::unfiltered(&sim.path).increments,
    )?;
    let r = m.kappa_min / 2.0;
    println!("kappa_min {:.4}, kappa_max {:.4}", m.kappa_min, m.kappa_max);
    println!(
        "deviation {:.4} vs r = {:.4}: Q event {}",
        q_deviation(&stats, &m.c_inf)?,
        r,
        check_q_event(&stats, &m.c_inf, r)?
    );
    println!("lambda_min(C_hat) = {:.4}", re_constant(&stats)?);

    let constants = SpectralConstants::of(a.as_matrix())?;
    let table = empirical_concentration(&model, &[50.0, 200.0], &[0.25, 0.5], 40, 0.01, 11)?;
    println!("T, r, empirical, bound");
    for c in &table.cells {
        let bound = gaussian_concentration_bound(c.horizon, c.r, constants, m.kappa_max);
        println!(
            "{}, {}, {:.3}, {:.3}",
            c.horizon,
            c.r,
            c.frequency,
            bound.min(1.0)
        );
    }
    Ok(())
}
