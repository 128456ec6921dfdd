//! Numerical kernels shared by the rest of the crate: Slope weights and the
//! sorted-ℓ1 norm, proximal operators, and symmetric eigenvalue utilities.

use nalgebra::SymmetricEigen;

use crate::{Error, Matrix, Result};

/// Nonincreasing Slope weights `λ_j = sqrt(log(2m / j))`, `j = 1..m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeWeights {
    lambdas: Vec<f64>,
}

impl SlopeWeights {
    /// Standard weights for `m` coordinates (`m = d₁·d₂` for a matrix).
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("slope weights need m >= 1"));
        }
        let two_m = 2.0 * m as f64;
        let lambdas = (1..=m).map(|j| (two_m / j as f64).ln().sqrt()).collect();
        Ok(SlopeWeights { lambdas })
    }

    /// Weights for a `rows × cols` matrix.
    pub fn for_matrix(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows * cols)
    }

    /// Arbitrary weights; must be positive and nonincreasing.
    pub fn from_lambdas(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::invalid("slope weights need m >= 1"));
        }
        if lambdas.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(Error::invalid("slope weights must be finite and positive"));
        }
        if lambdas.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("slope weights must be nonincreasing"));
        }
        Ok(SlopeWeights { lambdas })
    }

    /// Constant weights, which turn the sorted-ℓ1 norm into a scaled ℓ1 norm.
    pub fn constant(m: usize, value: f64) -> Result<Self> {
        Self::from_lambdas(vec![value; m])
    }

    pub fn m(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Largest weight `λ₁`.
    pub fn first(&self) -> f64 {
        self.lambdas[0]
    }
}

/// Indices of `values` ordered by nonincreasing magnitude; ties keep the
/// original index order.
pub fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    idx
}

/// Sorted-ℓ1 norm `Σ_j λ_j |v|_(j)` of a flat slice.
pub fn sorted_l1(values: &[f64], w: &SlopeWeights) -> Result<f64> {
    if values.len() != w.m() {
        return Err(Error::DimensionMismatch {
            expected: w.m(),
            actual: values.len(),
        });
    }
    let order = magnitude_order(values);
    Ok(order
        .iter()
        .zip(w.lambdas())
        .map(|(&i, l)| l * values[i].abs())
        .sum())
}

/// Sorted-ℓ1 (Slope) norm of a matrix, taken over all of its entries.
pub fn slope_norm(b: &Matrix, w: &SlopeWeights) -> Result<f64> {
    sorted_l1(b.as_slice(), w)
}

/// `‖B‖_S = max(‖B‖_*, sqrt(log(4/ε₀))·‖B‖₂)`.
///
/// Confidence levels live in `(0,1)`; any `ε₀ < 4` still yields a norm and
/// is accepted.
pub fn norm_s(b: &Matrix, eps0: f64, w: &SlopeWeights) -> Result<f64> {
    if !(eps0 > 0.0 && eps0 < 4.0) {
        return Err(Error::invalid(format!(
            "eps0 must lie in (0,4), got {eps0}"
        )));
    }
    let star = slope_norm(b, w)?;
    let scaled_frob = (4.0 / eps0).ln().sqrt() * b.norm();
    Ok(star.max(scaled_frob))
}

/// Componentwise `sign(v)·max(|v| − τ, 0)`.
pub fn soft_threshold(v: &[f64], tau: f64) -> Vec<f64> {
    v.iter().map(|&x| soft_threshold_scalar(x, tau)).collect()
}

#[inline]
pub fn soft_threshold_scalar(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Proximal operator of the sorted-ℓ1 penalty `Σ_j τ_j x_(j)`:
///
/// ```text
/// argmin_x ½‖x − v‖² + Σ_j τ_j |x|_(j)
/// ```
///
/// Sorts the magnitudes, fits a nonincreasing sequence to `|v|_(j) − τ_j`
/// with pool-adjacent-violators, clips at zero and restores signs and order.
pub fn prox_sorted_l1(v: &[f64], taus: &[f64]) -> Result<Vec<f64>> {
    if v.len() != taus.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            actual: taus.len(),
        });
    }
    if taus.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("prox weights must be nonincreasing"));
    }
    if taus.iter().any(|t| *t < 0.0 || !t.is_finite()) {
        return Err(Error::invalid(
            "prox weights must be finite and nonnegative",
        ));
    }
    let n = v.len();
    let order = magnitude_order(v);

    // Blocks of pooled coordinates: (start, len, sum).
    let mut blocks: Vec<(usize, usize, f64)> = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        blocks.push((k, 1, v[i].abs() - taus[k]));
        while blocks.len() > 1 {
            let (_, len_b, sum_b) = blocks[blocks.len() - 1];
            let (_, len_a, sum_a) = blocks[blocks.len() - 2];
            if sum_a / len_a as f64 > sum_b / len_b as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("at least one block");
            last.1 += len_b;
            last.2 += sum_b;
        }
    }

    let mut out = vec![0.0; n];
    for (start, len, sum) in blocks {
        let value = (sum / len as f64).max(0.0);
        for &i in &order[start..start + len] {
            out[i] = value.copysign(v[i]);
            if value == 0.0 {
                out[i] = 0.0;
            }
        }
    }
    Ok(out)
}

fn symmetrized(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    let s = symmetrized(m)?;
    let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Smallest and largest eigenvalue of a symmetric matrix (symmetrized first).
pub fn sym_eig_extremes(m: &Matrix) -> Result<(f64, f64)> {
    let eig = sym_eigenvalues(m)?;
    match (eig.first(), eig.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(Error::invalid("empty matrix")),
    }
}

/// Largest eigenvalue magnitude of a symmetric matrix, i.e. its spectral norm.
pub fn sym_spectral_radius(m: &Matrix) -> Result<f64> {
    let (lo, hi) = sym_eig_extremes(m)?;
    Ok(lo.abs().max(hi.abs()))
}

/// Largest singular value of a general matrix.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Entrywise ℓ1 norm.
pub fn l1_norm(m: &Matrix) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

/// Number of entries with magnitude above `threshold`.
pub fn count_nonzero(m: &Matrix, threshold: f64) -> usize {
    m.iter().filter(|x| x.abs() > threshold).count()
}

/// Cheap 1-norm condition estimate `‖M‖₁·‖M⁻¹‖₁`; infinite when singular.
pub fn condition_estimate(m: &Matrix) -> f64 {
    let norm1 = |x: &Matrix| {
        x.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match m.clone().try_inverse() {
        Some(inv) if inv.iter().all(|x| x.is_finite()) => norm1(m) * norm1(&inv),
        _ => f64::INFINITY,
    }
}
