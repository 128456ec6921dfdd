//! Simulate a jump-driven OU path and write it as CSV.
//!
//! ```bash
//! cargo run -p sparselab --example simulate_path -- /tmp/path.csv
//! ```

use std::fs::File;
use std::io::BufWriter;

use sparselab::model::{DriftMatrix, LevySpec, OUModel};
use sparselab::simulate::{simulate_path, write_path_csv, SimConfig};
use sparselab::Matrix;

fn main() -> sparselab::Result<()> {
    let drift = DriftMatrix::from_row_slice(3, &[1.0, 0.4, 0.0, 0.0, 0.8, -0.3, 0.0, 0.0, 1.2])?;
    let sigma = Matrix::from_diagonal(&sparselab::Vector::from_vec(vec![0.5, 1.0, 2.0]));
    let model = OUModel::new(drift, LevySpec::with_laplace_jumps(sigma, 3.0, 1.0)?)?;

    let sim = simulate_path(&model, &SimConfig::new(50.0, 0.01, 7))?;
    println!("steps: {}", sim.path.steps());
    println!("jumps: {}", sim.record.jump_marks.len());
    println!(
        "Euler reconstruction error: {:.3e}",
        sim.reconstruction_error(model.drift().as_matrix(), &model.levy().drift)
    );

    if let Some(out) = std::env::args().nth(1) {
        write_path_csv(&sim.path, BufWriter::new(File::create(&out)?))?;
        println!("wrote {out}");
    }
    Ok(())
}
