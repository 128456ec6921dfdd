#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use sparselab::estimators::Objective;
use sparselab::stats::SufficientStats;
use sparselab::Matrix;

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Well-conditioned random statistics: `Ĉ = MMᵀ/d + floor·Id`.
pub fn random_stats<R: Rng>(d: usize, floor: f64, rng: &mut R) -> SufficientStats {
    let m = gaussian_matrix(d, d, rng);
    let c_hat = &m * m.transpose() / d as f64 + Matrix::identity(d, d) * floor;
    let g = gaussian_matrix(d, d, rng);
    SufficientStats::new(c_hat, g, 50.0).unwrap()
}

pub fn random_diag_sigma<R: Rng>(d: usize, rng: &mut R) -> Matrix {
    Matrix::from_diagonal(&sparselab::Vector::from_fn(d, |_, _| {
        rng.random_range(0.5..2.0)
    }))
}

pub fn random_objective<R: Rng>(d: usize, rng: &mut R) -> Objective {
    let sigma = random_diag_sigma(d, rng);
    Objective::new(random_stats(d, 0.3, rng), &sigma).unwrap()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax()
}

/// Sorted-ℓ1 penalty computed directly from its definition.
pub fn sorted_l1_direct(x: &[f64], taus: &[f64]) -> f64 {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.iter().zip(taus).map(|(m, t)| m * t).sum()
}

/// Orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> Matrix {
    gaussian_matrix(d, d, rng).qr().q()
}
