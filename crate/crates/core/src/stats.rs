//! Sufficient statistics of the likelihood, jump filtering and the
//! restricted-eigenvalue / concentration diagnostics.
//!
//! From a path sampled at step `δ` with horizon `T = N·δ`:
//!
//! ```text
//! Ĉ_T = (1/T) Σ_k X_k X_kᵀ δ
//! G_T = (1/T) Σ_k ΔX^c_k X_kᵀ
//! ```
//!
//! where `ΔX^c_k` are the jump-filtered increments.

use std::io::Write;
use std::ops::Range;

use nalgebra::{Complex, DMatrix, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::model::{stationary_moments, OUModel};
use crate::numkit::{spectral_norm, sym_eig_extremes, sym_spectral_radius};
use crate::simulate::{
    fmt_f64, rng_from_seed, simulate_path, split_seed, SamplePath, SimConfig, SimulatedPath,
};
use crate::{Error, Matrix, Result, Vector};

/// `(Ĉ_T, G_T, T)`: everything the likelihood needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub c_hat: Matrix,
    pub g: Matrix,
    pub horizon: f64,
}

impl SufficientStats {
    pub fn new(c_hat: Matrix, g: Matrix, horizon: f64) -> Result<Self> {
        let d = c_hat.nrows();
        if !c_hat.is_square() || g.nrows() != d || g.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: g.nrows(),
            });
        }
        if c_hat.iter().chain(g.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("statistics have non-finite entries"));
        }
        if !(horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        let c_hat = (&c_hat + c_hat.transpose()) * 0.5;
        Ok(SufficientStats { c_hat, g, horizon })
    }

    pub fn dim(&self) -> usize {
        self.c_hat.nrows()
    }
}

/// Truncation rule: an increment is jump-contaminated when
/// `‖ΔX_k + δ·A_pilot·X_k‖ > v·σ_max·δ^β`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRule {
    pub threshold_coefficient: f64,
    pub beta: f64,
    /// Drift pre-compensation; `None` means `A_pilot = 0`.
    pub pilot: Option<Matrix>,
}

impl Default for FilterRule {
    fn default() -> Self {
        FilterRule {
            threshold_coefficient: 4.0,
            beta: 0.49,
            pilot: None,
        }
    }
}

impl FilterRule {
    /// A rule that keeps every increment.
    pub fn keep_all() -> Self {
        FilterRule {
            threshold_coefficient: f64::INFINITY,
            ..FilterRule::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_coefficient > 0.0) {
            return Err(Error::invalid(
                "filter threshold coefficient must be positive",
            ));
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(Error::invalid("filter exponent beta must lie in (0, 1/2)"));
        }
        Ok(())
    }

    pub fn threshold(&self, sigma_max: f64, delta: f64) -> f64 {
        self.threshold_coefficient * sigma_max * delta.powf(self.beta)
    }
}

/// Estimated continuous increments plus the indices that were zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredIncrements {
    pub increments: Vec<Vector>,
    pub flagged: Vec<usize>,
    pub threshold: f64,
}

impl FilteredIncrements {
    /// Every increment kept verbatim.
    pub fn unfiltered(path: &SamplePath) -> Self {
        FilteredIncrements {
            increments: path.increments(),
            flagged: Vec::new(),
            threshold: f64::INFINITY,
        }
    }

    pub fn fraction_flagged(&self) -> f64 {
        if self.increments.is_empty() {
            0.0
        } else {
            self.flagged.len() as f64 / self.increments.len() as f64
        }
    }
}

/// Zeroes every increment whose size exceeds the truncation threshold.
/// Flagged increments are replaced by zero so that time alignment with the
/// states is preserved.
pub fn filter_jumps(
    path: &SamplePath,
    rule: &FilterRule,
    sigma_max: f64,
) -> Result<FilteredIncrements> {
    rule.validate()?;
    if !(sigma_max > 0.0) {
        return Err(Error::invalid("sigma_max must be positive"));
    }
    let delta = path.delta;
    let threshold = rule.threshold(sigma_max, delta);
    let mut increments = path.increments();
    let mut flagged = Vec::new();
    if threshold.is_finite() {
        for (k, inc) in increments.iter_mut().enumerate() {
            let size = match &rule.pilot {
                Some(a) => (&*inc + a * &path.states[k] * delta).norm(),
                None => inc.norm(),
            };
            if size > threshold {
                inc.fill(0.0);
                flagged.push(k);
            }
        }
    }
    Ok(FilteredIncrements {
        increments,
        flagged,
        threshold,
    })
}

/// Statistics over the steps in `range` (increment `k` pairs with state `k`).
pub fn compute_stats_range(
    path: &SamplePath,
    filtered: &[Vector],
    range: Range<usize>,
) -> Result<SufficientStats> {
    if filtered.len() != path.steps() {
        return Err(Error::DimensionMismatch {
            expected: path.steps(),
            actual: filtered.len(),
        });
    }
    if range.is_empty() || range.end > path.steps() {
        return Err(Error::invalid(format!(
            "step range {range:?} is empty or exceeds {} steps",
            path.steps()
        )));
    }
    let d = path.dim();
    let delta = path.delta;
    let horizon = range.len() as f64 * delta;
    let mut c_hat = Matrix::zeros(d, d);
    let mut g = Matrix::zeros(d, d);
    for k in range {
        let x = &path.states[k];
        c_hat.ger(1.0, x, x, 1.0);
        g.ger(1.0, &filtered[k], x, 1.0);
    }
    c_hat *= delta / horizon;
    g /= horizon;
    SufficientStats::new(c_hat, g, horizon)
}

/// Statistics over the whole path.
pub fn compute_stats(path: &SamplePath, filtered: &[Vector]) -> Result<SufficientStats> {
    compute_stats_range(path, filtered, 0..path.steps())
}

/// `sup_{‖B‖₂ ≤ 1} |tr(B(Ĉ_T − C_∞)Bᵀ)|`, which equals the spectral radius of
/// the symmetric difference.
pub fn q_deviation(stats: &SufficientStats, c_inf: &Matrix) -> Result<f64> {
    if c_inf.shape() != stats.c_hat.shape() {
        return Err(Error::DimensionMismatch {
            expected: stats.dim(),
            actual: c_inf.nrows(),
        });
    }
    sym_spectral_radius(&(&stats.c_hat - c_inf))
}

/// Whether the event `Q_T(r)` holds.
pub fn check_q_event(stats: &SufficientStats, c_inf: &Matrix, r: f64) -> Result<bool> {
    Ok(q_deviation(stats, c_inf)? <= r)
}

/// Restricted-eigenvalue constant over all nonzero `B`:
/// `inf ‖BX‖²_{L²} / ‖B‖₂² = λ_min(Ĉ_T)`.
pub fn re_constant(stats: &SufficientStats) -> Result<f64> {
    Ok(sym_eig_extremes(&stats.c_hat)?.0)
}

/// `ε_T = (1/T) Σ_k (Σ⁻¹ ΔW̃_k) X_kᵀ` from the recorded Gaussian increments.
/// Only meaningful for simulated paths.
pub fn epsilon_t(sim: &SimulatedPath, sigma: &Matrix) -> Result<Matrix> {
    let path = &sim.path;
    let incs = &sim.record.gauss_increments;
    if incs.len() != path.steps() {
        return Err(Error::MissingIncrements(format!(
            "expected {} recorded increments, found {}",
            path.steps(),
            incs.len()
        )));
    }
    let d = path.dim();
    let sigma_inv = sigma
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("diffusion matrix is singular"))?;
    let mut eps = Matrix::zeros(d, d);
    for (x, g) in path.states.iter().zip(incs) {
        let w = &sigma_inv * g;
        eps.ger(1.0, &w, x, 1.0);
    }
    Ok(eps / path.horizon())
}

/// Spectral constants entering the Gaussian concentration function:
/// `τ₀ = min Re λ_i(A)` and `p₀ = ‖P‖·‖P⁻¹‖` for the eigenvector matrix `P`
/// (unit-norm columns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConstants {
    pub tau0: f64,
    pub p0: f64,
}

impl SpectralConstants {
    pub fn of(a: &Matrix) -> Result<Self> {
        let d = a.nrows();
        let eig = a.clone().schur().complex_eigenvalues();
        let tau0 = eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let ac: DMatrix<Complex<f64>> = a.map(|x| Complex::new(x, 0.0));
        let mut p = DMatrix::<Complex<f64>>::zeros(d, d);
        for (j, lambda) in eig.iter().enumerate() {
            let shifted = &ac - DMatrix::<Complex<f64>>::identity(d, d) * *lambda;
            let svd = SVD::new(shifted, false, true);
            let v_t = svd
                .v_t
                .ok_or_else(|| Error::invalid("eigenvector computation failed"))?;
            // right singular vector of the smallest singular value
            let (imin, _) =
                svd.singular_values
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::INFINITY),
                        |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc },
                    );
            for i in 0..d {
                p[(i, j)] = v_t[(imin, i)].conj();
            }
        }
        let sv = SVD::new(p, false, false).singular_values;
        let hi = sv.iter().copied().fold(0.0, f64::max);
        let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if !(lo > 1e-12 * hi) {
            return Err(Error::invalid("drift matrix is not diagonalizable"));
        }
        Ok(SpectralConstants { tau0, p0: hi / lo })
    }
}

/// Rate function of the Gaussian concentration bound
/// `H₀(r) = τ₀ r² / (8 κ_max p₀ (r + κ_max))`.
pub fn gaussian_h0(r: f64, constants: SpectralConstants, kappa_max: f64) -> f64 {
    constants.tau0 * r * r / (8.0 * kappa_max * constants.p0 * (r + kappa_max))
}

/// `2·exp(−T·H₀(r))` for a driver with unit diffusion.
pub fn gaussian_concentration_bound(
    horizon: f64,
    r: f64,
    constants: SpectralConstants,
    kappa_max: f64,
) -> f64 {
    2.0 * (-horizon * gaussian_h0(r, constants, kappa_max)).exp()
}

/// One cell of an empirical concentration table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationCell {
    pub horizon: f64,
    pub r: f64,
    pub frequency: f64,
}

/// Empirical `Ĥ(T, r)` frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationTable {
    pub cells: Vec<ConcentrationCell>,
    pub reps: usize,
}

impl ConcentrationTable {
    pub fn frequency(&self, horizon: f64, r: f64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.horizon == horizon && c.r == r)
            .map(|c| c.frequency)
    }

    /// `T,r,frequency` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["T", "r", "frequency"])?;
        for c in &self.cells {
            w.write_record([fmt_f64(c.horizon), fmt_f64(c.r), fmt_f64(c.frequency)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Canonical basis plus `extra` random unit vectors.
pub fn probe_vectors(d: usize, extra: usize, seed: u64) -> Vec<Vector> {
    let mut rng = rng_from_seed(seed);
    let mut out: Vec<Vector> = (0..d)
        .map(|i| {
            let mut e = Vector::zeros(d);
            e[i] = 1.0;
            e
        })
        .collect();
    for _ in 0..extra {
        let v = Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        out.push(v.normalize());
    }
    out
}

/// Steps of a path of step `delta` closest to horizon `t`.
pub(crate) fn steps_for(horizon: f64, delta: f64) -> usize {
    (horizon / delta).round().max(1.0) as usize
}

/// Estimates `max_u P(|uᵀ(Ĉ_T − C_∞)u| ≥ r)` over the canonical basis and 5
/// random unit vectors by replication frequency. Each replication simulates
/// one path to the largest horizon and evaluates its prefixes.
pub fn empirical_concentration(
    model: &OUModel,
    horizons: &[f64],
    radii: &[f64],
    reps: usize,
    delta: f64,
    seed: u64,
) -> Result<ConcentrationTable> {
    if horizons.is_empty() || radii.is_empty() || reps == 0 {
        return Err(Error::invalid(
            "concentration grids and reps must be nonempty",
        ));
    }
    let d = model.dim();
    let c_inf = stationary_moments(model)?.c_inf;
    let probes = probe_vectors(d, 5, split_seed(seed, u64::MAX));
    let t_max = horizons.iter().copied().fold(0.0, f64::max);

    // deviations[rep][t][u]
    let deviations: Vec<Vec<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Vec<f64>>> {
            let sim = simulate_path(
                model,
                &SimConfig::new(t_max, delta, split_seed(seed, rep as u64)),
            )?;
            let incs = FilteredIncrements::unfiltered(&sim.path).increments;
            horizons
                .iter()
                .map(|&t| {
                    let n = steps_for(t, delta).min(sim.path.steps());
                    let stats = compute_stats_range(&sim.path, &incs, 0..n)?;
                    let diff = &stats.c_hat - &c_inf;
                    Ok(probes
                        .iter()
                        .map(|u| (u.transpose() * &diff * u)[(0, 0)].abs())
                        .collect())
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(horizons.len() * radii.len());
    for (ti, &t) in horizons.iter().enumerate() {
        for &r in radii {
            let frequency = (0..probes.len())
                .map(|ui| {
                    deviations.iter().filter(|rep| rep[ti][ui] >= r).count() as f64 / reps as f64
                })
                .fold(0.0, f64::max);
            cells.push(ConcentrationCell {
                horizon: t,
                r,
                frequency,
            });
        }
    }
    Ok(ConcentrationTable { cells, reps })
}

/// Largest singular value of `Σ`, the scale used by the jump filter.
pub fn sigma_max(sigma: &Matrix) -> f64 {
    spectral_norm(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(delta: f64, states: &[&[f64]]) -> SamplePath {
        SamplePath::new(
            delta,
            states.iter().map(|s| Vector::from_row_slice(s)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_states_zero_increments() {
        let p = path(0.1, &[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let f = FilteredIncrements::unfiltered(&p);
        let s = compute_stats(&p, &f.increments).unwrap();
        let x = Vector::from_vec(vec![1.0, 2.0]);
        assert!((&s.c_hat - &x * x.transpose()).amax() < 1e-14);
        assert_eq!(s.g, Matrix::zeros(2, 2));
        assert!((s.horizon - 0.3).abs() < 1e-15);
    }

    #[test]
    fn single_step_cross_statistic() {
        let p = path(0.01, &[&[1.0, 0.0], &[1.0, 1.0]]);
        let f = FilteredIncrements::unfiltered(&p);
        let s = compute_stats(&p, &f.increments).unwrap();
        // G = e₂ e₁ᵀ / δ
        let mut want = Matrix::zeros(2, 2);
        want[(1, 0)] = 1.0 / 0.01;
        assert!((&s.g - want).amax() < 1e-12);
    }

    #[test]
    fn stats_length_mismatch() {
        let p = path(0.1, &[&[1.0], &[2.0], &[3.0]]);
        assert!(compute_stats(&p, &[Vector::zeros(1)]).is_err());
    }

    #[test]
    fn infinite_threshold_keeps_everything() {
        let p = path(0.01, &[&[0.0], &[100.0], &[0.0]]);
        let f = filter_jumps(&p, &FilterRule::keep_all(), 1.0).unwrap();
        assert!(f.flagged.is_empty());
        assert_eq!(f.increments, p.increments());
    }

    #[test]
    fn large_increment_is_flagged() {
        let p = path(0.01, &[&[0.0], &[0.05], &[10.05], &[10.0]]);
        let f = filter_jumps(&p, &FilterRule::default(), 1.0).unwrap();
        assert_eq!(f.flagged, vec![1]);
        assert_eq!(f.increments[1], Vector::zeros(1));
        assert!(filter_jumps(
            &p,
            &FilterRule {
                beta: 0.5,
                ..FilterRule::default()
            },
            1.0
        )
        .is_err());
    }

    #[test]
    fn q_event_cases() {
        let c = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let s = SufficientStats::new(c.clone(), Matrix::zeros(2, 2), 1.0).unwrap();
        assert!(check_q_event(&s, &c, 1e-12).unwrap());

        let mut shifted = c.clone();
        shifted[(0, 0)] += 0.4;
        let s = SufficientStats::new(shifted, Matrix::zeros(2, 2), 1.0).unwrap();
        assert!(check_q_event(&s, &c, 0.4 + 1e-12).unwrap());
        assert!(!check_q_event(&s, &c, 0.39).unwrap());
    }

    #[test]
    fn re_constant_cases() {
        let s = SufficientStats::new(Matrix::identity(3, 3), Matrix::zeros(3, 3), 1.0).unwrap();
        assert!((re_constant(&s).unwrap() - 1.0).abs() < 1e-15);
        let c = Matrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 2.0]);
        let s = SufficientStats::new(c, Matrix::zeros(2, 2), 1.0).unwrap();
        assert!((re_constant(&s).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn spectral_constants_symmetric_and_diagonalizable() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = SpectralConstants::of(&a).unwrap();
        assert!((c.p0 - 1.0).abs() < 1e-8);
        let expected_min = 1.5 - (0.25f64 + 0.25).sqrt();
        assert!((c.tau0 - expected_min).abs() < 1e-12);

        // upper triangular with eigenvalues 1, 2: P = [[1, 1/√2],[0, 1/√2]]
        let a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let c = SpectralConstants::of(&a).unwrap();
        let p = Matrix::from_row_slice(2, 2, &[1.0, 0.5f64.sqrt(), 0.0, 0.5f64.sqrt()]);
        let sv = p.singular_values();
        assert!((c.p0 - sv.max() / sv.min()).abs() < 1e-8);
        assert!((c.tau0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn h0_is_increasing() {
        let c = SpectralConstants { tau0: 0.5, p0: 1.0 };
        let mut last = 0.0;
        for r in [0.1, 0.2, 0.5, 1.0, 3.0] {
            let h = gaussian_h0(r, c, 1.0);
            assert!(h > last);
            last = h;
        }
    }

    #[test]
    fn probe_vectors_are_unit() {
        let v = probe_vectors(4, 5, 1);
        assert_eq!(v.len(), 9);
        assert!(v.iter().all(|u| (u.norm() - 1.0).abs() < 1e-14));
    }
}
