//! Domain types of the Lévy-driven OU model and its stationary moments.
//!
//! The stationary covariance is the solution of the continuous Lyapunov
//! equation `A·X + X·Aᵀ = Q`, solved here through the `d² × d²` Kronecker
//! system `(I ⊗ A + A ⊗ I) vec(X) = vec(Q)`. The same solve decides
//! stability: `A` has spectrum in the open right half-plane iff the solution
//! for `Q = Id` is symmetric positive definite.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::LU;
use rand::{Rng, RngCore};

use crate::numkit::{condition_estimate, sym_eig_extremes, sym_spectral_radius};
use crate::{Error, Matrix, Result, Vector};

/// Condition estimate above which a Kronecker Lyapunov solve is not trusted.
pub const LYAPUNOV_CONDITION_LIMIT: f64 = 1e14;
/// Relative eigenvalue tolerance of the positive-definiteness test.
pub const SPD_TOLERANCE: f64 = 1e-10;
/// Relative residual accepted from [`lyapunov_solve`].
pub const LYAPUNOV_RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Default bound on the condition estimate of the diffusion matrix.
pub const DEFAULT_SIGMA_CONDITION_LIMIT: f64 = 1e12;

/// Square drift matrix `A` of `dX = −A X dt + dZ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrix(Matrix);

impl DriftMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::invalid(format!(
                "drift matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("drift matrix has non-finite entries"));
        }
        Ok(DriftMatrix(entries))
    }

    pub fn from_row_slice(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                actual: entries.len(),
            });
        }
        Self::new(Matrix::from_row_slice(d, d, entries))
    }

    pub fn identity(d: usize) -> Self {
        DriftMatrix(Matrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    /// Number of nonzero entries.
    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|x| **x != 0.0).count()
    }
}

impl Deref for DriftMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Sampler signature for user-supplied jump laws: returns one jump of the
/// given dimension.
pub type JumpSampler = dyn Fn(&mut dyn RngCore, usize) -> Vector + Send + Sync;

/// A user-supplied jump law. The second moment `E[zzᵀ]` and mean `E[z]` are
/// needed for the stationary moments.
#[derive(Clone)]
pub struct CustomJumpLaw {
    pub tag: String,
    pub sampler: Arc<JumpSampler>,
    pub mean: Vector,
    pub second_moment: Matrix,
}

impl fmt::Debug for CustomJumpLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomJumpLaw")
            .field("tag", &self.tag)
            .field("mean", &self.mean)
            .field("second_moment", &self.second_moment)
            .finish_non_exhaustive()
    }
}

/// Distribution of a single jump of the compound-Poisson component.
#[derive(Debug, Clone)]
pub enum JumpLaw {
    None,
    /// Independent Laplace coordinates with the given scales.
    Laplace {
        scales: Vec<f64>,
    },
    Custom(CustomJumpLaw),
}

impl JumpLaw {
    /// Laplace law with the same scale on every coordinate.
    pub fn laplace(scale: f64, d: usize) -> Self {
        JumpLaw::Laplace {
            scales: vec![scale; d],
        }
    }

    /// `E[z]` for a single jump.
    pub fn mean(&self, d: usize) -> Vector {
        match self {
            JumpLaw::None | JumpLaw::Laplace { .. } => Vector::zeros(d),
            JumpLaw::Custom(c) => c.mean.clone(),
        }
    }

    /// `E[zzᵀ]` for a single jump; `2·b²` on the diagonal for Laplace.
    pub fn second_moment(&self, d: usize) -> Matrix {
        match self {
            JumpLaw::None => Matrix::zeros(d, d),
            JumpLaw::Laplace { scales } => Matrix::from_diagonal(&Vector::from_iterator(
                d,
                scales.iter().map(|b| 2.0 * b * b),
            )),
            JumpLaw::Custom(c) => c.second_moment.clone(),
        }
    }
}

/// Lévy triplet of the driving process: drift `b`, diffusion `Σ`
/// (`C = ΣΣᵀ`), and a compound-Poisson jump part.
#[derive(Debug, Clone)]
pub struct LevySpec {
    pub drift: Vector,
    pub sigma: Matrix,
    pub jump_intensity: f64,
    pub jump_law: JumpLaw,
}

impl LevySpec {
    /// Pure Brownian driver `Σ W_t`.
    pub fn gaussian(sigma: Matrix) -> Result<Self> {
        let d = sigma.nrows();
        let spec = LevySpec {
            drift: Vector::zeros(d),
            sigma,
            jump_intensity: 0.0,
            jump_law: JumpLaw::None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Brownian driver plus Laplace jumps with a common scale.
    pub fn with_laplace_jumps(sigma: Matrix, intensity: f64, scale: f64) -> Result<Self> {
        let d = sigma.nrows();
        let spec = LevySpec {
            drift: Vector::zeros(d),
            sigma,
            jump_intensity: intensity,
            jump_law: JumpLaw::laplace(scale, d),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// `C = ΣΣᵀ`.
    pub fn diffusion_covariance(&self) -> Matrix {
        &self.sigma * self.sigma.transpose()
    }

    pub fn has_jumps(&self) -> bool {
        self.jump_intensity > 0.0 && !matches!(self.jump_law, JumpLaw::None)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_limit(DEFAULT_SIGMA_CONDITION_LIMIT)
    }

    pub fn validate_with_limit(&self, condition_limit: f64) -> Result<()> {
        let d = self.sigma.nrows();
        if !self.sigma.is_square() || d == 0 {
            return Err(Error::invalid(
                "diffusion matrix must be square and non-empty",
            ));
        }
        if self.sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("diffusion matrix has non-finite entries"));
        }
        if self.drift.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.drift.len(),
            });
        }
        let cond = condition_estimate(&self.sigma);
        if cond > condition_limit {
            return Err(Error::invalid(format!(
                "diffusion matrix is singular or ill-conditioned (condition estimate {cond:.3e})"
            )));
        }
        let (lo, hi) = sym_eig_extremes(&self.diffusion_covariance())?;
        if lo <= SPD_TOLERANCE * hi.abs() {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
        }
        if !(self.jump_intensity >= 0.0 && self.jump_intensity.is_finite()) {
            return Err(Error::invalid("jump intensity must be finite and >= 0"));
        }
        match &self.jump_law {
            JumpLaw::None => {}
            JumpLaw::Laplace { scales } => {
                if scales.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: scales.len(),
                    });
                }
                if scales.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
                    return Err(Error::invalid("Laplace scales must be positive"));
                }
            }
            JumpLaw::Custom(c) => {
                if c.mean.len() != d || c.second_moment.nrows() != d || c.second_moment.ncols() != d
                {
                    return Err(Error::invalid(format!(
                        "custom jump law '{}' has moments of the wrong dimension",
                        c.tag
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The data-generating OU model: stable drift plus Lévy driver.
#[derive(Debug, Clone)]
pub struct OUModel {
    drift: DriftMatrix,
    levy: LevySpec,
}

impl OUModel {
    pub fn new(drift: DriftMatrix, levy: LevySpec) -> Result<Self> {
        levy.validate()?;
        if drift.dim() != levy.dim() {
            return Err(Error::DimensionMismatch {
                expected: drift.dim(),
                actual: levy.dim(),
            });
        }
        if !validate_stability(&drift)? {
            return Err(Error::NotStable);
        }
        Ok(OUModel { drift, levy })
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn drift(&self) -> &DriftMatrix {
        &self.drift
    }

    pub fn levy(&self) -> &LevySpec {
        &self.levy
    }

    pub fn sigma(&self) -> &Matrix {
        &self.levy.sigma
    }
}

/// Stationary second moment `C_∞ = E[X Xᵀ]` and its extreme eigenvalues.
#[derive(Debug, Clone)]
pub struct StationaryMoments {
    pub c_inf: Matrix,
    /// Stationary mean; zero unless the driver has a drift or biased jumps.
    pub mean: Vector,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

/// Factorized Kronecker form of `X ↦ A·X + X·Aᵀ`.
struct LyapunovOperator {
    d: usize,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl LyapunovOperator {
    /// `None` when the operator is exactly singular.
    fn new(a: &Matrix) -> Option<Self> {
        let d = a.nrows();
        let n = d * d;
        let mut k = Matrix::zeros(n, n);
        // Column-major vec: vec(A X) = (I ⊗ A) vec X, vec(X Aᵀ) = (A ⊗ I) vec X.
        for blk in 0..d {
            for i in 0..d {
                for j in 0..d {
                    k[(blk * d + i, blk * d + j)] += a[(i, j)];
                }
            }
        }
        for bi in 0..d {
            for bj in 0..d {
                let v = a[(bi, bj)];
                if v != 0.0 {
                    for i in 0..d {
                        k[(bi * d + i, bj * d + i)] += v;
                    }
                }
            }
        }
        let condition = condition_estimate(&k);
        if !condition.is_finite() {
            return None;
        }
        Some(LyapunovOperator {
            d,
            lu: k.lu(),
            condition,
        })
    }

    fn solve(&self, q: &Matrix) -> Option<Matrix> {
        let rhs = Vector::from_column_slice(q.as_slice());
        let x = self.lu.solve(&rhs)?;
        let x = Matrix::from_column_slice(self.d, self.d, x.as_slice());
        Some((&x + x.transpose()) * 0.5)
    }
}

fn lyapunov_residual(a: &Matrix, x: &Matrix, q: &Matrix) -> Result<f64> {
    let r = a * x + x * a.transpose() - q;
    sym_spectral_radius(&((&r + r.transpose()) * 0.5))
}

fn is_spd(p: &Matrix) -> Result<bool> {
    let (lo, hi) = sym_eig_extremes(p)?;
    Ok(hi > 0.0 && lo > SPD_TOLERANCE * hi)
}

/// Whether every eigenvalue of `A` has positive real part.
///
/// Decided by solving `A·P + P·Aᵀ = Id` and testing `P` for positive
/// definiteness. A nonpositive trace, or an exactly singular Lyapunov
/// operator (some `λ_i + λ_j = 0`), already rules stability out.
pub fn validate_stability(a: &DriftMatrix) -> Result<bool> {
    let m = a.as_matrix();
    if m.trace() <= 0.0 {
        return Ok(false);
    }
    let Some(op) = LyapunovOperator::new(m) else {
        return Ok(false);
    };
    if op.condition > LYAPUNOV_CONDITION_LIMIT {
        return Err(Error::StabilityUndecidable {
            condition: op.condition,
            limit: LYAPUNOV_CONDITION_LIMIT,
        });
    }
    let Some(p) = op.solve(&Matrix::identity(a.dim(), a.dim())) else {
        return Ok(false);
    };
    is_spd(&p)
}

/// Solves `A·X + X·Aᵀ = Q` for stable `A` and symmetric PSD `Q`.
pub fn lyapunov_solve(a: &DriftMatrix, q: &Matrix) -> Result<Matrix> {
    let d = a.dim();
    if q.nrows() != d || q.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: q.nrows(),
        });
    }
    let q_norm = sym_spectral_radius(q)?;
    if (q - q.transpose()).amax() > 1e-12 * q_norm.max(1.0) {
        return Err(Error::invalid("Lyapunov right-hand side must be symmetric"));
    }
    let m = a.as_matrix();
    if m.trace() <= 0.0 {
        return Err(Error::NotStable);
    }
    let op = LyapunovOperator::new(m).ok_or(Error::NotStable)?;
    if op.condition > LYAPUNOV_CONDITION_LIMIT {
        return Err(Error::StabilityUndecidable {
            condition: op.condition,
            limit: LYAPUNOV_CONDITION_LIMIT,
        });
    }
    let p = op.solve(&Matrix::identity(d, d)).ok_or(Error::NotStable)?;
    if !is_spd(&p)? {
        return Err(Error::NotStable);
    }
    let x = op.solve(q).ok_or(Error::NotStable)?;
    let residual = lyapunov_residual(m, &x, q)?;
    let tolerance = LYAPUNOV_RESIDUAL_TOLERANCE * q_norm;
    if residual > tolerance {
        return Err(Error::LyapunovResidual {
            residual,
            tolerance,
        });
    }
    Ok(x)
}

/// Stationary second moment of the model.
///
/// The covariance solves the Lyapunov equation with
/// `Q = ΣΣᵀ + λ_jump·E[zzᵀ]`; a nonzero stationary mean
/// `m = A⁻¹(b + λ_jump·E[z])` contributes `m mᵀ`.
pub fn stationary_moments(model: &OUModel) -> Result<StationaryMoments> {
    let d = model.dim();
    let levy = model.levy();
    let mut q = levy.diffusion_covariance();
    let mut forcing = levy.drift.clone();
    if levy.has_jumps() {
        q += levy.jump_law.second_moment(d) * levy.jump_intensity;
        forcing += levy.jump_law.mean(d) * levy.jump_intensity;
    }
    let covariance = lyapunov_solve(model.drift(), &q)?;
    let mean = if forcing.iter().all(|x| *x == 0.0) {
        Vector::zeros(d)
    } else {
        model
            .drift()
            .as_matrix()
            .clone()
            .lu()
            .solve(&forcing)
            .ok_or(Error::NotStable)?
    };
    let c_inf = covariance + &mean * mean.transpose();
    let (kappa_min, kappa_max) = sym_eig_extremes(&c_inf)?;
    Ok(StationaryMoments {
        c_inf,
        mean,
        kappa_min,
        kappa_max,
    })
}

/// Exponential decay rate estimate `1 / (2·λ_max(P))` with `A·P + P·Aᵀ = Id`.
/// Exact for `A = a·Id`.
pub fn decay_rate_estimate(a: &DriftMatrix) -> Result<f64> {
    let d = a.dim();
    let p = lyapunov_solve(a, &Matrix::identity(d, d))?;
    let (_, hi) = sym_eig_extremes(&p)?;
    Ok(1.0 / (2.0 * hi))
}

/// Step of the stabilizing diagonal shift in [`generate_sparse_stable`].
pub const STABILIZING_SHIFT_STEP: f64 = 0.5;
/// Maximum number of diagonal shifts in [`generate_sparse_stable`].
pub const MAX_SHIFT_STEPS: usize = 100;

/// Random sparse stable drift matrix.
///
/// Off-diagonal entries are nonzero with probability `density` and uniform
/// on `[−magnitude, magnitude]`; the diagonal is then raised in steps of 0.5
/// until the matrix is stable.
pub fn generate_sparse_stable<R: Rng + ?Sized>(
    d: usize,
    density: f64,
    magnitude: f64,
    rng: &mut R,
) -> Result<DriftMatrix> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::invalid(format!(
            "density must lie in [0,1], got {density}"
        )));
    }
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::invalid("magnitude must be finite and >= 0"));
    }
    let mut m = Matrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            if i != j && rng.random::<f64>() < density {
                m[(i, j)] = rng.random_range(-magnitude..=magnitude);
            }
        }
    }
    for _ in 0..=MAX_SHIFT_STEPS {
        let candidate = DriftMatrix::new(m.clone())?;
        // An undecidable verdict sits on the stability boundary; keep shifting.
        if let Ok(true) = validate_stability(&candidate) {
            return Ok(candidate);
        }
        for i in 0..d {
            m[(i, i)] += STABILIZING_SHIFT_STEP;
        }
    }
    Err(Error::GenerationFailed {
        steps: MAX_SHIFT_STEPS,
    })
}

/// Maximum number of candidate draws in [`generate_hypothesis_set`].
pub const MAX_HYPOTHESIS_ATTEMPTS: usize = 1000;

/// Support size `r` of the antisymmetric perturbations: the largest even
/// number with `r ≤ (s − d)/2`.
pub fn hypothesis_support(d: usize, s: usize) -> usize {
    let half = s.saturating_sub(d) / 2;
    half - half % 2
}

/// Well-separated hypotheses `½·Id + w·B` used in minimax lower-bound
/// constructions.
///
/// Each `B` is antisymmetric with entries in `{−1, 0, 1}` and exactly `r`
/// nonzeros, so `A + Aᵀ = Id` and the stationary covariance under `Σ = Id`
/// is the identity. Candidates closer than `r/8` in entrywise ℓ1 distance to
/// an accepted one are rejected.
pub fn generate_hypothesis_set<R: Rng + ?Sized>(
    d: usize,
    s: usize,
    w: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<DriftMatrix>> {
    if d < 4 {
        return Err(Error::invalid(format!(
            "hypothesis sets need d >= 4, got {d}"
        )));
    }
    if s < 2 * d {
        return Err(Error::invalid(format!(
            "hypothesis sets need s >= 2d, got s={s}, d={d}"
        )));
    }
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::invalid("w must be positive"));
    }
    let r = hypothesis_support(d, s);
    let upper: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .collect();
    let separation = r as f64 / 8.0;

    let mut accepted: Vec<Matrix> = Vec::with_capacity(count);
    let mut attempts = 0;
    while accepted.len() < count && attempts < MAX_HYPOTHESIS_ATTEMPTS {
        attempts += 1;
        let mut b = Matrix::zeros(d, d);
        for idx in rand::seq::index::sample(rng, upper.len(), r / 2) {
            let (i, j) = upper[idx];
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            b[(i, j)] = sign;
            b[(j, i)] = -sign;
        }
        let separated = accepted
            .iter()
            .all(|other| (&b - other).iter().map(|x| x.abs()).sum::<f64>() >= separation);
        if separated {
            accepted.push(b);
        }
    }
    if accepted.len() < count {
        return Err(Error::HypothesisSeparation {
            achieved: accepted.len(),
            requested: count,
            attempts,
        });
    }

    let half_id = Matrix::identity(d, d) * 0.5;
    accepted
        .into_iter()
        .map(|b| {
            let a = DriftMatrix::new(&half_id + b * w)?;
            if a.nnz() > s || !validate_stability(&a)? {
                return Err(Error::NotStable);
            }
            Ok(a)
        })
        .collect()
}

/// Kullback–Leibler divergence between the path laws of two drifts sharing
/// `C_∞`: `(T/2)·tr((A₂ − A)·C_∞·(A₂ − A)ᵀ)`.
pub fn kl_divergence(
    a: &DriftMatrix,
    a2: &DriftMatrix,
    c_inf: &Matrix,
    horizon: f64,
) -> Result<f64> {
    let d = a.dim();
    if a2.dim() != d || c_inf.nrows() != d || c_inf.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: if a2.dim() != d {
                a2.dim()
            } else {
                c_inf.nrows()
            },
        });
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let diff = a2.as_matrix() - a.as_matrix();
    Ok(0.5 * horizon * (&diff * c_inf * diff.transpose()).trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn drift(d: usize, rows: &[f64]) -> DriftMatrix {
        DriftMatrix::from_row_slice(d, rows).unwrap()
    }

    #[test]
    fn stability_simple_cases() {
        assert!(validate_stability(&DriftMatrix::identity(2)).unwrap());
        assert!(!validate_stability(&drift(2, &[-1.0, 0.0, 0.0, -1.0])).unwrap());
        assert!(!validate_stability(&drift(2, &[0.0, 1.0, -1.0, 0.0])).unwrap());
        // positive trace but one negative eigenvalue
        assert!(!validate_stability(&drift(2, &[3.0, 0.0, 0.0, -1.0])).unwrap());
        // opposite eigenvalues make the operator singular
        assert!(
            !validate_stability(&drift(3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 3.0]))
                .unwrap()
        );
    }

    #[test]
    fn stability_non_normal() {
        // eigenvalues 1, 2 with a large off-diagonal coupling
        assert!(validate_stability(&drift(2, &[1.0, 50.0, 0.0, 2.0])).unwrap());
    }

    #[test]
    fn drift_rejects_bad_input() {
        assert!(DriftMatrix::new(Matrix::zeros(2, 3)).is_err());
        let mut m = Matrix::identity(2, 2);
        m[(0, 0)] = f64::INFINITY;
        assert!(DriftMatrix::new(m).is_err());
    }

    #[test]
    fn lyapunov_scalar_and_diagonal() {
        let a = DriftMatrix::new(Matrix::identity(3, 3) * 2.5).unwrap();
        let x = lyapunov_solve(&a, &Matrix::identity(3, 3)).unwrap();
        assert!((x - Matrix::identity(3, 3) * 0.2).amax() < 1e-15);

        let a = drift(2, &[1.0, 0.0, 0.0, 2.0]);
        let x = lyapunov_solve(&a, &Matrix::identity(2, 2)).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]);
        assert!((x - want).amax() < 1e-15);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = drift(2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            lyapunov_solve(&a, &Matrix::identity(2, 2)),
            Err(Error::NotStable)
        ));
    }

    #[test]
    fn stationary_moments_gaussian() {
        let a = DriftMatrix::new(Matrix::identity(2, 2) * 0.5).unwrap();
        let model = OUModel::new(a, LevySpec::gaussian(Matrix::identity(2, 2)).unwrap()).unwrap();
        let m = stationary_moments(&model).unwrap();
        assert!((&m.c_inf - Matrix::identity(2, 2)).amax() < 1e-14);
        assert!((m.kappa_min - 1.0).abs() < 1e-14 && (m.kappa_max - 1.0).abs() < 1e-14);

        let a = drift(2, &[1.0, 0.0, 0.0, 2.0]);
        let model = OUModel::new(a, LevySpec::gaussian(Matrix::identity(2, 2)).unwrap()).unwrap();
        let m = stationary_moments(&model).unwrap();
        assert!((m.kappa_min - 0.25).abs() < 1e-14 && (m.kappa_max - 0.5).abs() < 1e-14);
    }

    #[test]
    fn stationary_moments_laplace_adds_jump_variance() {
        let a = DriftMatrix::identity(2);
        let levy = LevySpec::with_laplace_jumps(Matrix::identity(2, 2), 5.0, 1.0).unwrap();
        let m = stationary_moments(&OUModel::new(a, levy).unwrap()).unwrap();
        // (1 + 5·2) / 2 on the diagonal
        assert!((&m.c_inf - Matrix::identity(2, 2) * 5.5).amax() < 1e-13);
    }

    #[test]
    fn stationary_mean_from_levy_drift() {
        let a = DriftMatrix::identity(1);
        let mut levy = LevySpec::gaussian(Matrix::identity(1, 1)).unwrap();
        levy.drift = Vector::from_vec(vec![2.0]);
        let m = stationary_moments(&OUModel::new(a, levy).unwrap()).unwrap();
        assert!((m.mean[0] - 2.0).abs() < 1e-15);
        assert!((m.c_inf[(0, 0)] - 4.5).abs() < 1e-14);
    }

    #[test]
    fn levy_spec_validation() {
        assert!(LevySpec::gaussian(Matrix::zeros(2, 2)).is_err());
        assert!(LevySpec::with_laplace_jumps(Matrix::identity(2, 2), -1.0, 1.0).is_err());
        assert!(LevySpec::with_laplace_jumps(Matrix::identity(2, 2), 1.0, 0.0).is_err());
    }

    #[test]
    fn decay_rate_of_scaled_identity() {
        let a = DriftMatrix::new(Matrix::identity(3, 3) * 0.7).unwrap();
        assert!((decay_rate_estimate(&a).unwrap() - 0.7).abs() < 1e-14);
    }

    #[test]
    fn sparse_stable_generation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = generate_sparse_stable(4, 0.0, 1.0, &mut rng).unwrap();
        assert!(a
            .iter()
            .enumerate()
            .all(|(k, x)| if k % 5 == 0 { *x > 0.0 } else { *x == 0.0 }));
        assert!(validate_stability(&a).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = generate_sparse_stable(15, 0.2, 1.0, &mut rng).unwrap();
        assert!(validate_stability(&a).unwrap());
        let frac = a.nnz() as f64 / 225.0;
        assert!((0.1..=0.35).contains(&frac), "nonzero fraction {frac}");

        let b = generate_sparse_stable(15, 0.2, 1.0, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hypothesis_support_sizes() {
        assert_eq!(hypothesis_support(4, 8), 2);
        assert_eq!(hypothesis_support(6, 12), 2);
        assert_eq!(hypothesis_support(10, 30), 10);
        assert_eq!(hypothesis_support(10, 32), 10);
        assert_eq!(hypothesis_support(10, 34), 12);
    }

    #[test]
    fn hypothesis_set_symmetric_part_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = generate_hypothesis_set(4, 8, 0.1, 6, &mut rng).unwrap();
        assert_eq!(set.len(), 6);
        for a in &set {
            assert_eq!(a.as_matrix() + a.transpose(), Matrix::identity(4, 4));
            let c = lyapunov_solve(a, &Matrix::identity(4, 4)).unwrap();
            assert!((c - Matrix::identity(4, 4)).amax() < 1e-10);
        }
    }

    #[test]
    fn hypothesis_set_reports_shortfall() {
        // d=4, s=8 has only 12 distinct perturbations
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        match generate_hypothesis_set(4, 8, 0.1, 13, &mut rng) {
            Err(Error::HypothesisSeparation { achieved, .. }) => assert_eq!(achieved, 12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(generate_hypothesis_set(3, 8, 0.1, 2, &mut rng).is_err());
        assert!(generate_hypothesis_set(4, 7, 0.1, 2, &mut rng).is_err());
    }

    #[test]
    fn kl_cases() {
        let a = drift(2, &[1.0, 0.2, 0.0, 1.0]);
        let c = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert_eq!(kl_divergence(&a, &a, &c, 7.0).unwrap(), 0.0);

        let a2 =
            DriftMatrix::new(a.as_matrix() + Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))
                .unwrap();
        assert!((kl_divergence(&a, &a2, &c, 10.0).unwrap() - 10.0).abs() < 1e-12);

        let a3 = drift(2, &[0.0, 1.0, 2.0, -1.0]);
        let id = Matrix::identity(2, 2);
        let want = 0.5 * 4.0 * (a3.as_matrix() - a.as_matrix()).norm_squared();
        assert!((kl_divergence(&a, &a3, &id, 4.0).unwrap() - want).abs() < 1e-12);
        assert!(kl_divergence(&a, &a3, &id, 0.0).is_err());
    }
}
