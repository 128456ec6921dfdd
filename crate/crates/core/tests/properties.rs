mod common;

use common::sorted_l1_direct;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparselab::model::{
    generate_hypothesis_set, generate_sparse_stable, lyapunov_solve, DriftMatrix,
};
use sparselab::numkit::{l1_norm, prox_sorted_l1, slope_norm, SlopeWeights};
use sparselab::Matrix;

fn vec_and_taus(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(0.0..2.0f64, n).prop_map(|mut t| {
                t.sort_by(|a, b| b.total_cmp(a));
                t
            }),
        )
    })
}

fn prox_objective(x: &[f64], v: &[f64], taus: &[f64]) -> f64 {
    0.5 * x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + sorted_l1_direct(x, taus)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn slope_norm_is_a_norm(
        a in prop::collection::vec(-3.0..3.0f64, 9),
        b in prop::collection::vec(-3.0..3.0f64, 9),
        c in -4.0..4.0f64,
    ) {
        let w = SlopeWeights::for_matrix(3, 3).unwrap();
        let a = Matrix::from_vec(3, 3, a);
        let b = Matrix::from_vec(3, 3, b);
        let na = slope_norm(&a, &w).unwrap();
        let nb = slope_norm(&b, &w).unwrap();
        prop_assert!(na >= 0.0);
        prop_assert!(slope_norm(&(&a + &b), &w).unwrap() <= na + nb + 1e-12);
        prop_assert!((slope_norm(&(&a * c), &w).unwrap() - c.abs() * na).abs() <= 1e-12 * (1.0 + na));
    }

    #[test]
    fn slope_norm_is_sandwiched_by_l1(entries in prop::collection::vec(-3.0..3.0f64, 16)) {
        let w = SlopeWeights::for_matrix(4, 4).unwrap();
        let b = Matrix::from_vec(4, 4, entries);
        let s = slope_norm(&b, &w).unwrap();
        let l1 = l1_norm(&b);
        prop_assert!(2f64.ln().sqrt() * l1 <= s + 1e-12);
        prop_assert!(s <= w.first() * l1 + 1e-12);
    }

    #[test]
    fn prox_beats_perturbations((v, taus) in vec_and_taus(8), seed in any::<u64>()) {
        let x = prox_sorted_l1(&v, &taus).unwrap();
        let fx = prox_objective(&x, &v, &taus);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for scale in [1e-1, 1e-3] {
            let y: Vec<f64> = x.iter().map(|xi| xi + scale * rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            prop_assert!(fx <= prox_objective(&y, &v, &taus) + 1e-12);
        }
    }

    #[test]
    fn prox_is_nonexpansive(
        (v, taus) in vec_and_taus(8),
        shift in prop::collection::vec(-2.0..2.0f64, 8),
    ) {
        let u: Vec<f64> = v.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let pv = prox_sorted_l1(&v, &taus).unwrap();
        let pu = prox_sorted_l1(&u, &taus).unwrap();
        let d_in: f64 = v.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let d_out: f64 = pv.iter().zip(&pu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(d_out <= d_in + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lyapunov_residual_is_small(d in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = generate_sparse_stable(d, 0.4, 1.0, &mut rng).unwrap();
        let m = common::gaussian_matrix(d, d, &mut rng);
        let q = &m * m.transpose() + Matrix::identity(d, d);
        let c = lyapunov_solve(&a, &q).unwrap();
        let r = a.as_matrix() * &c + &c * a.as_matrix().transpose() - &q;
        prop_assert!(r.norm() <= 1e-10 * q.norm());
        prop_assert!((&c - c.transpose()).amax() <= 1e-12 * c.amax());
    }

    #[test]
    fn lyapunov_commutes_with_rotation(d in 2usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = generate_sparse_stable(d, 0.4, 1.0, &mut rng).unwrap();
        let u = common::random_orthogonal(d, &mut rng);
        let q = Matrix::identity(d, d) + Matrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { 0.1 });
        let c = lyapunov_solve(&a, &q).unwrap();
        let a_rot = DriftMatrix::new(&u * a.as_matrix() * u.transpose()).unwrap();
        let c_rot = lyapunov_solve(&a_rot, &(&u * &q * u.transpose())).unwrap();
        prop_assert!((c_rot - &u * c * u.transpose()).amax() <= 1e-10 * (1.0 + q.amax()));
    }

    #[test]
    fn hypotheses_contract_at_unit_rate(seed in any::<u64>(), t in 0.1..3.0f64) {
        // A + Aᵀ = Id gives ‖e^{−At}x‖² = e^{−t}‖x‖², i.e. e^{−At}e^{−Aᵀt} = e^{−t}·Id
        let set = generate_hypothesis_set(6, 12, 0.1, 3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for a in &set {
            let e = (a.as_matrix() * -t).exp();
            let prod = &e * e.transpose();
            prop_assert!((prod - Matrix::identity(6, 6) * (-t).exp()).amax() < 1e-10);
        }
    }
}
