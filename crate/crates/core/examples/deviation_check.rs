//! Dictionary lower bound of the stochastic-error supremum against its
//! theoretical threshold.
//!
//! ```bash
//! cargo run --release -p sparselab --example deviation_check
//! ```

use sparselab::experiments::{run_deviation_check, DeviationConfig};

fn main() -> sparselab::Result<()> {
    let cfg = DeviationConfig {
        reps: 20,
        ..DeviationConfig::default()
    };
    let report = run_deviation_check(&cfg)?;
    let worst = report.rows.iter().map(|r| r.statistic).fold(0.0, f64::max);
    println!("threshold {:.4}", report.threshold);
    println!("largest statistic {worst:.4}");
    println!("violation frequency {}", report.violation_frequency());
    Ok(())
}
