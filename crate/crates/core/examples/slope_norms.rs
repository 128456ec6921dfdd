//! Sorted-l1 norm, its proximal operator and the soft-threshold special case.
//!
//! ```bash
//! cargo run -p sparselab --example slope_norms
//! ```

use sparselab::numkit::{norm_s, prox_sorted_l1, slope_norm, soft_threshold, SlopeWeights};
use sparselab::Matrix;

fn main() -> sparselab::Result<()> {
    let b = Matrix::from_row_slice(2, 2, &[3.0, -0.5, 0.0, 1.5]);
    let w = SlopeWeights::new(4)?;
    println!("weights {:?}", w.lambdas());
    println!("||B||_* = {:.4}", slope_norm(&b, &w)?);
    println!("||B||_S (eps0 = 0.1) = {:.4}", norm_s(&b, 0.1, &w)?);

    let v = [3.0, -2.5, 0.4, -0.1];
    let taus: Vec<f64> = w.lambdas().iter().map(|l| 0.5 * l).collect();
    println!("prox_sorted_l1 {:?}", prox_sorted_l1(&v, &taus)?);
    println!("flat weights   {:?}", prox_sorted_l1(&v, &[0.5; 4])?);
    println!("soft threshold {:?}", soft_threshold(&v, 0.5));
    Ok(())
}
