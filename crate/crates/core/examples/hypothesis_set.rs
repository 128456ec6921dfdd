//! Well-separated sparse drift matrices with identity stationary covariance
//! and their pairwise Kullback-Leibler divergences.
//!
//! ```bash
//! cargo run -p sparselab --example hypothesis_set
//! ```

use sparselab::model::{
    generate_hypothesis_set, hypothesis_support, kl_divergence, lyapunov_solve,
};
use sparselab::simulate::rng_from_seed;
use sparselab::Matrix;

fn main() -> sparselab::Result<()> {
    let (d, s, w) = (6, 12, 0.1);
    let set = generate_hypothesis_set(d, s, w, 6, &mut rng_from_seed(3))?;
    println!("support r = {}", hypothesis_support(d, s));
    let id = Matrix::identity(d, d);
    for (i, a) in set.iter().enumerate() {
        let c = lyapunov_solve(a, &id)?;
        println!("A{i}: nnz {}, |C - Id| = {:.1e}", a.nnz(), (c - &id).amax());
    }
    for j in 1..set.len() {
        println!(
            "KL(A0, A{j}) at T=100: {:.4}",
            kl_divergence(&set[0], &set[j], &id, 100.0)?
        );
    }
    Ok(())
}
