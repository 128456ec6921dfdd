//! Slope at the theoretical penalty: squared error against the horizon.
//!
//! ```bash
//! cargo run --release -p sparselab --example rate_check
//! ```

use sparselab::experiments::{run_rate_check, RateCheckConfig};

fn main() -> sparselab::Result<()> {
    let cfg = RateCheckConfig {
        d: 6,
        reps: 10,
        ..RateCheckConfig::default()
    };
    let report = run_rate_check(&cfg)?;
    println!(
        "s = {}, kappa_min = {:.3}",
        report.sparsity, report.kappa_min
    );
    report.write_csv(std::io::stdout())?;
    for r in report.ratios() {
        println!("ratio {r:.3}");
    }
    Ok(())
}
