//! Stationary covariance via the Lyapunov equation, and the decay rate.
//!
//! ```bash
//! cargo run -p sparselab --example stationary_moments
//! ```

use sparselab::model::{
    decay_rate_estimate, lyapunov_solve, stationary_moments, validate_stability, DriftMatrix,
    LevySpec, OUModel,
};
use sparselab::Matrix;

fn main() -> sparselab::Result<()> {
    let a = DriftMatrix::from_row_slice(2, &[1.0, 0.5, -0.5, 2.0])?;
    println!("stable: {}", validate_stability(&a)?);

    let c = lyapunov_solve(&a, &Matrix::identity(2, 2))?;
    let residual = (a.as_matrix() * &c + &c * a.transpose() - Matrix::identity(2, 2)).norm();
    println!("C for Q = Id:\n{c:.6}residual {residual:.2e}");

    let gaussian = OUModel::new(a.clone(), LevySpec::gaussian(Matrix::identity(2, 2))?)?;
    let with_jumps = OUModel::new(
        a.clone(),
        LevySpec::with_laplace_jumps(Matrix::identity(2, 2), 2.0, 0.5)?,
    )?;
    for (name, m) in [("gaussian", &gaussian), ("laplace jumps", &with_jumps)] {
        let s = stationary_moments(m)?;
        println!(
            "{name}: kappa_min={:.4} kappa_max={:.4}",
            s.kappa_min, s.kappa_max
        );
    }
    println!("decay rate estimate: {:.4}", decay_rate_estimate(&a)?);
    Ok(())
}
