//! MLE vs cross-validated Lasso and Slope across dimensions, with an SVG of
//! the L2 errors.
//!
//! ```bash
//! cargo run --release -p sparselab --example estimator_comparison -- /tmp/l2.svg
//! ```

use sparselab::estimators::EstimatorKind;
use sparselab::experiments::{run_comparison, ComparisonConfig};
use sparselab::plot::{line_chart, Series};

fn main() -> sparselab::Result<()> {
    let cfg = ComparisonConfig {
        dims: vec![4, 6, 8],
        reps: 3,
        seed: 2024,
        ..ComparisonConfig::default()
    };
    let report = run_comparison(&cfg)?;
    report.write_summary_csv(std::io::stdout())?;

    if let Some(out) = std::env::args().nth(1) {
        let series: Vec<Series> = [
            EstimatorKind::Mle,
            EstimatorKind::Lasso,
            EstimatorKind::Slope,
        ]
        .into_iter()
        .map(|k| {
            let cells: Vec<_> = cfg
                .dims
                .iter()
                .filter_map(|&d| report.aggregate(d, k))
                .collect();
            Series {
                name: k.to_string(),
                x: cells.iter().map(|a| a.d as f64).collect(),
                y: cells.iter().map(|a| a.mean_l2).collect(),
                band: cells.iter().map(|a| a.sd_l2).collect(),
            }
        })
        .collect();
        std::fs::write(&out, line_chart("L2 error", "d", "mean L2 error", &series))?;
        println!("wrote {out}");
    }
    Ok(())
}
