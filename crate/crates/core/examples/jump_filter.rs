//! Threshold filtering of jump increments compared with the recorded jumps.
//!
//! ```bash
//! cargo run -p sparselab --example jump_filter
//! ```

use std::collections::BTreeSet;

use sparselab::model::{DriftMatrix, LevySpec, OUModel};
use sparselab::simulate::{simulate_path, SimConfig};
use sparselab::stats::{filter_jumps, sigma_max, FilterRule};
use sparselab::Matrix;

fn main() -> sparselab::Result<()> {
    let a = DriftMatrix::from_row_slice(2, &[1.0, 0.3, 0.0, 1.0])?;
    let model = OUModel::new(
        a,
        LevySpec::with_laplace_jumps(Matrix::identity(2, 2) * 0.5, 5.0, 1.0)?,
    )?;
    let sim = simulate_path(&model, &SimConfig::new(40.0, 0.01, 9))?;

    let filtered = filter_jumps(&sim.path, &FilterRule::default(), sigma_max(model.sigma()))?;
    let truth: BTreeSet<usize> = sim.jump_steps().into_iter().collect();
    let flagged: BTreeSet<usize> = filtered.flagged.iter().copied().collect();
    println!("threshold        {:.4}", filtered.threshold);
    println!("true jump steps  {}", truth.len());
    println!("flagged          {}", flagged.len());
    println!("caught           {}", truth.intersection(&flagged).count());
    println!("false alarms     {}", flagged.difference(&truth).count());
    Ok(())
}
