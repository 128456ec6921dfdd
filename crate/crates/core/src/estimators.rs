//! Likelihood, closed-form MLE and the penalized Lasso / Slope estimators.
//!
//! With `C = ΣΣᵀ` and statistics `(Ĉ_T, G_T)` the negative log-likelihood
//! per unit time is the quadratic
//!
//! ```text
//! L_T(A) = tr(C⁻¹ A G_Tᵀ) + ½ tr(C⁻¹ A Ĉ_T Aᵀ)
//! ∇L_T(A) = C⁻¹ (G_T + A Ĉ_T)
//! ```
//!
//! `G_T` is built from `+ΔX^c`, so under the model `G_T ≈ −A₀ Ĉ_T` and the
//! MLE is `Â = −G_T Ĉ_T⁻¹`.
//!
//! The penalized problems are solved in `B = Σ⁻¹A`, where the smooth part
//! becomes `⟨Σ⁻¹G_T, B⟩ + ½ tr(B Ĉ_T Bᵀ)` and the penalties act on `B`
//! entrywise (ℓ1) or through its sorted magnitudes (Slope).

use serde::{Deserialize, Serialize};

use crate::numkit::{
    l1_norm, prox_sorted_l1, slope_norm, soft_threshold_scalar, sym_eig_extremes, SlopeWeights,
};
use crate::stats::SufficientStats;
use crate::{Error, Matrix, Result};

/// Largest tolerated condition number of `Ĉ_T` for the closed-form MLE.
pub const MLE_CONDITION_LIMIT: f64 = 1e12;

/// Likelihood of one set of sufficient statistics under diffusion `Σ`.
#[derive(Debug, Clone)]
pub struct Objective {
    stats: SufficientStats,
    sigma: Matrix,
    sigma_inv: Matrix,
    c_inv: Matrix,
    /// `Σ⁻¹ G_T`, the linear term in `B`-coordinates.
    linear_b: Matrix,
}

impl Objective {
    pub fn new(stats: SufficientStats, sigma: &Matrix) -> Result<Self> {
        let d = stats.dim();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: sigma.nrows(),
            });
        }
        let sigma_inv = sigma
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::invalid("diffusion matrix is singular"))?;
        let c_inv = sigma_inv.transpose() * &sigma_inv;
        let linear_b = &sigma_inv * &stats.g;
        Ok(Objective {
            stats,
            sigma: sigma.clone(),
            sigma_inv,
            c_inv,
            linear_b,
        })
    }

    pub fn dim(&self) -> usize {
        self.stats.dim()
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &Matrix {
        &self.sigma_inv
    }

    pub fn c_inv(&self) -> &Matrix {
        &self.c_inv
    }

    fn to_b(&self, a: &Matrix) -> Matrix {
        &self.sigma_inv * a
    }

    fn to_a(&self, b: &Matrix) -> Matrix {
        &self.sigma * b
    }

    /// Smooth part in `B`-coordinates from a precomputed `B·Ĉ_T`.
    fn smooth_b(&self, b: &Matrix, b_c: &Matrix) -> f64 {
        self.linear_b.dot(b) + 0.5 * b_c.dot(b)
    }
}

/// `L_T(A)`.
pub fn nll(obj: &Objective, a: &Matrix) -> f64 {
    let s = &obj.stats;
    let c_inv_a = &obj.c_inv * a;
    c_inv_a.dot(&s.g) + 0.5 * (c_inv_a * &s.c_hat).dot(a)
}

/// `∇L_T(A) = C⁻¹ (G_T + A Ĉ_T)`.
pub fn nll_gradient(obj: &Objective, a: &Matrix) -> Matrix {
    &obj.c_inv * (&obj.stats.g + a * &obj.stats.c_hat)
}

/// Penalty of a fit, applied to `Σ⁻¹A`.
#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    Lasso { lambda: f64 },
    Slope { lambda: f64, weights: SlopeWeights },
}

impl Penalty {
    pub fn lambda(&self) -> f64 {
        match self {
            Penalty::Lasso { lambda } | Penalty::Slope { lambda, .. } => *lambda,
        }
    }

    /// Penalty value at `B = Σ⁻¹A`.
    pub fn value(&self, b: &Matrix) -> Result<f64> {
        match self {
            Penalty::Lasso { lambda } => Ok(lambda * l1_norm(b)),
            Penalty::Slope { lambda, weights } => Ok(lambda * slope_norm(b, weights)?),
        }
    }

    /// `prox_{step·penalty}(v)`.
    pub fn prox(&self, v: &Matrix, step: f64) -> Result<Matrix> {
        match self {
            Penalty::Lasso { lambda } => Ok(v.map(|x| soft_threshold_scalar(x, step * lambda))),
            Penalty::Slope { lambda, weights } => {
                let taus: Vec<f64> = weights
                    .lambdas()
                    .iter()
                    .map(|w| step * lambda * w)
                    .collect();
                let x = prox_sorted_l1(v.as_slice(), &taus)?;
                Ok(Matrix::from_column_slice(v.nrows(), v.ncols(), &x))
            }
        }
    }
}

/// Solver settings for the penalized fits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Stop when `‖B − prox(B − ∇/L)‖₂` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point in `A`-coordinates; zero when `None`.
    pub init: Option<Matrix>,
    /// Keep the objective value of every iterate.
    pub track_objective: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 20_000,
            init: None,
            track_objective: false,
        }
    }
}

/// Fitted drift with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub a_hat: Matrix,
    pub lambda: f64,
    pub iterations: usize,
    pub optimality_residual: f64,
    /// `L_T(Â) + penalty`.
    pub objective_value: f64,
    pub converged: bool,
    /// Objective per iterate, when requested.
    pub objective_history: Vec<f64>,
}

impl EstimatorResult {
    /// Entries with magnitude above `threshold`.
    pub fn nnz(&self, threshold: f64) -> usize {
        crate::numkit::count_nonzero(&self.a_hat, threshold)
    }
}

/// Closed-form maximum-likelihood estimator `Â = −G_T Ĉ_T⁻¹`.
pub fn mle(obj: &Objective) -> Result<EstimatorResult> {
    let c_hat = &obj.stats.c_hat;
    let (lo, hi) = sym_eig_extremes(c_hat)?;
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < MLE_CONDITION_LIMIT) {
        return Err(Error::SingularDesign {
            min_eigenvalue: lo,
            condition,
        });
    }
    let chol = nalgebra::Cholesky::new(c_hat.clone()).ok_or(Error::SingularDesign {
        min_eigenvalue: lo,
        condition,
    })?;
    // Â Ĉ = −G  ⇔  Ĉ Âᵀ = −Gᵀ
    let a_hat = -chol.solve(&obj.stats.g.transpose()).transpose();
    let residual = nll_gradient(obj, &a_hat).norm();
    let objective_value = nll(obj, &a_hat);
    Ok(EstimatorResult {
        a_hat,
        lambda: 0.0,
        iterations: 0,
        optimality_residual: residual,
        objective_value,
        converged: true,
        objective_history: Vec::new(),
    })
}

/// Penalized likelihood `L_T(A) + penalty(Σ⁻¹A)` minimized by FISTA with
/// function-value restart in `B = Σ⁻¹A`, step `1/λ_max(Ĉ_T)`.
///
/// A momentum step that would increase the objective is replaced by a plain
/// proximal-gradient step from the current iterate. That step cannot increase
/// the objective in exact arithmetic, so successive objective values are
/// nonincreasing up to rounding in their evaluation.
pub fn fit_penalized(
    obj: &Objective,
    penalty: &Penalty,
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    let lambda = penalty.lambda();
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let d = obj.dim();
    if let Penalty::Slope { weights, .. } = penalty {
        if weights.m() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                actual: weights.m(),
            });
        }
    }
    let c_hat = &obj.stats.c_hat;
    let (_, l) = sym_eig_extremes(c_hat)?;
    if !(l > 0.0) {
        return Err(Error::SingularDesign {
            min_eigenvalue: l,
            condition: f64::INFINITY,
        });
    }
    let step = 1.0 / l;
    let grad_from = |b_c: &Matrix| &obj.linear_b + b_c;
    let objective_from =
        |b: &Matrix, b_c: &Matrix| -> Result<f64> { Ok(obj.smooth_b(b, b_c) + penalty.value(b)?) };

    let mut x = match &opts.init {
        Some(a0) => {
            if a0.shape() != (d, d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: a0.nrows(),
                });
            }
            obj.to_b(a0)
        }
        None => Matrix::zeros(d, d),
    };
    let mut x_c = &x * c_hat;
    let mut grad_x = grad_from(&x_c);
    let mut f_x = objective_from(&x, &x_c)?;
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut history = if opts.track_objective {
        vec![f_x]
    } else {
        Vec::new()
    };

    let residual_at = |x: &Matrix, grad: &Matrix| -> Result<f64> {
        Ok((x - penalty.prox(&(x - grad * step), step)?).norm())
    };
    let mut residual = residual_at(&x, &grad_x)?;
    let mut iterations = 0;
    while residual > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let grad_y = &obj.linear_b + &y * c_hat;
        let mut z = penalty.prox(&(&y - grad_y * step), step)?;
        let mut z_c = &z * c_hat;
        let mut f_z = objective_from(&z, &z_c)?;
        if f_z > f_x {
            t = 1.0;
            z = penalty.prox(&(&x - &grad_x * step), step)?;
            z_c = &z * c_hat;
            f_z = objective_from(&z, &z_c)?;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &z + (&z - &x) * ((t - 1.0) / t_next);
        t = t_next;
        x = z;
        x_c = z_c;
        f_x = f_z;
        grad_x = grad_from(&x_c);
        if opts.track_objective {
            history.push(f_x);
        }
        residual = residual_at(&x, &grad_x)?;
    }

    Ok(EstimatorResult {
        a_hat: obj.to_a(&x),
        lambda,
        iterations,
        optimality_residual: residual,
        objective_value: f_x,
        converged: residual <= opts.tol,
        objective_history: history,
    })
}

/// Lasso estimator: penalty `λ‖Σ⁻¹A‖₁`.
pub fn fit_lasso(obj: &Objective, lambda: f64, opts: &FitOptions) -> Result<EstimatorResult> {
    fit_penalized(obj, &Penalty::Lasso { lambda }, opts)
}

/// Slope estimator: penalty `λ‖Σ⁻¹A‖_*`.
pub fn fit_slope(
    obj: &Objective,
    lambda: f64,
    weights: &SlopeWeights,
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    fit_penalized(
        obj,
        &Penalty::Slope {
            lambda,
            weights: weights.clone(),
        },
        opts,
    )
}

/// Which penalized estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mle,
    Lasso,
    Slope,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mle => "mle",
            EstimatorKind::Lasso => "lasso",
            EstimatorKind::Slope => "slope",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mle" => Ok(EstimatorKind::Mle),
            "lasso" => Ok(EstimatorKind::Lasso),
            "slope" => Ok(EstimatorKind::Slope),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Fits `kind` at `lambda` (ignored for the MLE) with standard Slope weights.
pub fn fit(
    obj: &Objective,
    kind: EstimatorKind,
    lambda: f64,
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    match kind {
        EstimatorKind::Mle => mle(obj),
        EstimatorKind::Lasso => fit_lasso(obj, lambda, opts),
        EstimatorKind::Slope => fit_slope(
            obj,
            lambda,
            &SlopeWeights::for_matrix(obj.dim(), obj.dim())?,
            opts,
        ),
    }
}

/// Constants of the theoretical tuning parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningParams {
    /// Universal chaining constant `c₀`.
    #[serde(default = "default_c0")]
    pub c0: f64,
    /// Explicit Slope constant; `c_*·√κ_max` when absent.
    #[serde(default)]
    pub c_s: Option<f64>,
}

fn default_c0() -> f64 {
    1.0
}

impl Default for TuningParams {
    fn default() -> Self {
        TuningParams { c0: 1.0, c_s: None }
    }
}

impl TuningParams {
    pub fn with_c0(c0: f64) -> Self {
        TuningParams { c0, c_s: None }
    }

    /// `c_* = c₀·(sqrt(3π/log 2) + sqrt(300))`.
    pub fn c_star(&self) -> f64 {
        self.c0 * ((3.0 * std::f64::consts::PI / std::f64::consts::LN_2).sqrt() + 300f64.sqrt())
    }

    /// `c_S`, which must be at least `c_*·√κ_max`.
    pub fn c_s(&self, kappa_max: f64) -> Result<f64> {
        let floor = self.c_star() * kappa_max.sqrt();
        match self.c_s {
            None => Ok(floor),
            Some(c) if c >= floor * (1.0 - 1e-12) => Ok(c),
            Some(c) => Err(Error::invalid(format!(
                "c_S = {c} is below c_*·sqrt(kappa_max) = {floor}"
            ))),
        }
    }
}

/// Theoretical tuning parameter at equality:
///
/// * Lasso: `2c_*·sqrt((κ_max/T)·log(2e·d²/s))`, `s` defaulting to `d`;
/// * Slope: `2c_S/√T`.
pub fn theoretical_lambda(
    kind: EstimatorKind,
    kappa_max: f64,
    horizon: f64,
    d: usize,
    s_guess: Option<usize>,
    tuning: &TuningParams,
) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    if !(kappa_max > 0.0) {
        return Err(Error::invalid("kappa_max must be positive"));
    }
    match kind {
        EstimatorKind::Lasso => {
            let s = s_guess.unwrap_or(d);
            if s < 1 || s > d * d {
                return Err(Error::invalid(format!(
                    "s_guess must lie in [1, d²], got {s}"
                )));
            }
            let log_term = (2.0 * std::f64::consts::E * (d * d) as f64 / s as f64).ln();
            Ok(2.0 * tuning.c_star() * (kappa_max / horizon * log_term).sqrt())
        }
        EstimatorKind::Slope => Ok(2.0 * tuning.c_s(kappa_max)? / horizon.sqrt()),
        EstimatorKind::Mle => Ok(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vector;

    fn stats(c: &[f64], g: &[f64], d: usize) -> SufficientStats {
        SufficientStats::new(
            Matrix::from_row_slice(d, d, c),
            Matrix::from_row_slice(d, d, g),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn nll_zero_at_zero_drift() {
        let obj = Objective::new(
            stats(&[2.0, 0.1, 0.1, 1.0], &[0.3, -1.0, 0.2, 0.5], 2),
            &Matrix::identity(2, 2),
        )
        .unwrap();
        assert_eq!(nll(&obj, &Matrix::zeros(2, 2)), 0.0);
        assert_eq!(
            nll_gradient(&obj, &Matrix::zeros(2, 2)),
            obj.c_inv() * &obj.stats().g
        );
    }

    #[test]
    fn scalar_likelihood_sign_convention() {
        // d=1: L(a) = a·g/σ² + a²c/(2σ²)
        let (c, g, sigma) = (0.8, -0.3, 1.7);
        let obj = Objective::new(stats(&[c], &[g], 1), &Matrix::from_element(1, 1, sigma)).unwrap();
        for a in [-1.0, 0.0, 0.4, 2.5] {
            let want = a * g / (sigma * sigma) + a * a * c / (2.0 * sigma * sigma);
            let got = nll(&obj, &Matrix::from_element(1, 1, a));
            assert!((got - want).abs() < 1e-15, "a={a}: {got} vs {want}");
        }
        let m = mle(&obj).unwrap();
        assert!((m.a_hat[(0, 0)] - (-g / c)).abs() < 1e-15);
    }

    #[test]
    fn mle_recovers_noiseless_drift() {
        let a0 = Matrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, -0.3, 1.5, 0.1, 0.0, 0.4, 0.9]);
        let c = Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]);
        let g = -&a0 * &c;
        let obj = Objective::new(
            SufficientStats::new(c, g, 5.0).unwrap(),
            &Matrix::identity(3, 3),
        )
        .unwrap();
        let m = mle(&obj).unwrap();
        assert!((&m.a_hat - &a0).amax() < 1e-12);
        assert!(nll_gradient(&obj, &m.a_hat).amax() < 1e-10 * obj.stats().g.norm());
    }

    #[test]
    fn mle_singular_design() {
        let c = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let obj = Objective::new(
            SufficientStats::new(c, Matrix::zeros(2, 2), 1.0).unwrap(),
            &Matrix::identity(2, 2),
        )
        .unwrap();
        match mle(&obj) {
            Err(Error::SingularDesign { min_eigenvalue, .. }) => {
                assert!(min_eigenvalue.abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lasso_large_lambda_gives_zero() {
        let sigma = Matrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]);
        let obj = Objective::new(
            stats(&[2.0, 0.1, 0.1, 1.0], &[0.3, -1.0, 0.2, 0.5], 2),
            &sigma,
        )
        .unwrap();
        // gradient at B = 0 in B-coordinates is Σ⁻¹G
        let lam = (obj.sigma_inv() * &obj.stats().g).amax();
        let r = fit_lasso(&obj, lam * 1.0001, &FitOptions::default()).unwrap();
        assert_eq!(r.a_hat, Matrix::zeros(2, 2));
        assert!(r.converged);
    }

    #[test]
    fn lambda_validation() {
        let obj = Objective::new(stats(&[1.0], &[0.0], 1), &Matrix::identity(1, 1)).unwrap();
        assert!(fit_lasso(&obj, -1.0, &FitOptions::default()).is_err());
        let w = SlopeWeights::new(3).unwrap();
        assert!(fit_slope(&obj, 1.0, &w, &FitOptions::default()).is_err());
    }

    #[test]
    fn theoretical_lambda_values() {
        let t = TuningParams::default();
        let lasso = theoretical_lambda(EstimatorKind::Lasso, 1.0, 100.0, 10, Some(10), &t).unwrap();
        let c_star = (3.0 * std::f64::consts::PI / 2f64.ln()).sqrt() + 300f64.sqrt();
        let want = 2.0 * c_star * (0.01 * (20.0 * std::f64::consts::E).ln()).sqrt();
        assert!((lasso - want).abs() < 1e-12);
        assert!((lasso - 8.40).abs() < 5e-3);

        let slope = theoretical_lambda(EstimatorKind::Slope, 1.0, 100.0, 10, None, &t).unwrap();
        assert!((slope - 2.0 * c_star / 10.0).abs() < 1e-12);

        let mut last = f64::INFINITY;
        for s in 1..=100 {
            let l = theoretical_lambda(EstimatorKind::Lasso, 1.0, 100.0, 10, Some(s), &t).unwrap();
            assert!(l <= last);
            last = l;
        }
        assert!(theoretical_lambda(EstimatorKind::Lasso, 1.0, 100.0, 10, Some(101), &t).is_err());
    }

    #[test]
    fn c_star_formula() {
        let t = TuningParams::with_c0(0.5);
        let want = 0.5 * ((3.0 * std::f64::consts::PI / 2f64.ln()).sqrt() + 300f64.sqrt());
        assert!((t.c_star() - want).abs() < 1e-12);
        let low = TuningParams {
            c0: 1.0,
            c_s: Some(1.0),
        };
        assert!(low.c_s(1.0).is_err());
    }

    #[test]
    fn estimator_kind_parsing() {
        assert_eq!(
            "slope".parse::<EstimatorKind>().unwrap(),
            EstimatorKind::Slope
        );
        assert!("ridge".parse::<EstimatorKind>().is_err());
        assert_eq!(EstimatorKind::Lasso.to_string(), "lasso");
    }

    #[test]
    fn slope_prox_in_matrix_form_keeps_shape() {
        let p = Penalty::Slope {
            lambda: 1.0,
            weights: SlopeWeights::new(6).unwrap(),
        };
        let v = Matrix::from_row_slice(2, 3, &[3.0, -1.0, 0.2, 0.0, 2.0, -4.0]);
        let x = p.prox(&v, 0.1).unwrap();
        assert_eq!(x.shape(), (2, 3));
        let _ = Vector::zeros(1);
    }
}
