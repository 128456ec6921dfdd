//! Seeded Euler–Maruyama simulation of Lévy-driven OU paths.
//!
//! One step of size `δ`:
//!
//! ```text
//! X_{k+1} = X_k − δ·A·X_k + δ·b + Σ·√δ·ξ_k + J_k
//! ```
//!
//! where `ξ_k` is standard normal and `J_k` is the sum of a Poisson(`λδ`)
//! number of i.i.d. jumps, applied at the end of the step.
//!
//! The observable trajectory ([`SamplePath`]) is kept apart from the
//! simulation ground truth ([`PathRecord`]) so that estimators only ever see
//! states.

use std::io::{Read, Write};

use nalgebra::Cholesky;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{decay_rate_estimate, lyapunov_solve, JumpLaw, LevySpec, OUModel};
use crate::{Error, Matrix, Result, Vector};

/// Generator used for every simulation in the crate.
pub type SimRng = ChaCha8Rng;

/// Step size used when none is given.
pub const DEFAULT_DELTA: f64 = 1e-2;

/// Derives the seed of replication `index` from a master seed:
/// `splitmix64(master + index)`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

/// Horizon, step, burn-in and seed of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Time simulated and discarded before recording. `None` means: no
    /// burn-in for Gaussian models (exact stationary draw), and a
    /// decay-calibrated default for models with jumps.
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn new(horizon: f64, delta: f64, seed: u64) -> Self {
        SimConfig {
            horizon,
            delta,
            burn_in: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "T must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.delta > 0.0 && self.delta <= self.horizon) {
            return Err(Error::Config(format!(
                "delta must satisfy 0 < delta <= T, got {}",
                self.delta
            )));
        }
        if let Some(b) = self.burn_in {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("burn_in must be >= 0, got {b}")));
            }
        }
        Ok(())
    }

    /// Number of Euler steps `N = round(T/δ)`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.delta).round().max(1.0) as usize
    }
}

/// Observed discretized trajectory `X_0..X_N` on the grid `k·δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub delta: f64,
    pub states: Vec<Vector>,
}

impl SamplePath {
    pub fn new(delta: f64, states: Vec<Vector>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::invalid("a path needs at least two states"));
        }
        if !(delta > 0.0) {
            return Err(Error::invalid("delta must be positive"));
        }
        let d = states[0].len();
        if d == 0 || states.iter().any(|x| x.len() != d) {
            return Err(Error::invalid("path states have inconsistent dimensions"));
        }
        Ok(SamplePath { delta, states })
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Horizon `T = N·δ`.
    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.delta
    }

    /// Raw increments `X_{k+1} − X_k`.
    pub fn increments(&self) -> Vec<Vector> {
        self.states.windows(2).map(|w| &w[1] - &w[0]).collect()
    }

    /// The first `steps` steps of the path.
    pub fn truncated(&self, steps: usize) -> SamplePath {
        let n = steps.clamp(1, self.steps());
        SamplePath {
            delta: self.delta,
            states: self.states[..=n].to_vec(),
        }
    }
}

/// A jump applied at the end of step `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpMark {
    pub step: usize,
    pub count: usize,
    pub jump: Vector,
}

/// Ground truth recorded during simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// `Σ·√δ·ξ_k` for each step.
    pub gauss_increments: Vec<Vector>,
    pub jump_marks: Vec<JumpMark>,
}

/// A simulated path together with its recorded noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub path: SamplePath,
    pub record: PathRecord,
}

impl SimulatedPath {
    /// Largest deviation from the Euler recursion when re-applied with the
    /// generating drift and Lévy drift.
    pub fn reconstruction_error(&self, a: &Matrix, levy_drift: &Vector) -> f64 {
        let delta = self.path.delta;
        let mut jumps = vec![None; self.path.steps()];
        for m in &self.record.jump_marks {
            jumps[m.step] = Some(&m.jump);
        }
        let mut worst: f64 = 0.0;
        for (k, w) in self.path.states.windows(2).enumerate() {
            let mut next =
                &w[0] - (a * &w[0]) * delta + levy_drift * delta + &self.record.gauss_increments[k];
            if let Some(j) = jumps[k] {
                next += j;
            }
            worst = worst.max((next - &w[1]).amax());
        }
        worst
    }

    /// Increments with the recorded jumps removed, i.e. the true
    /// continuous increments of the Euler scheme.
    pub fn continuous_increments(&self) -> Vec<Vector> {
        let mut incs = self.path.increments();
        for m in &self.record.jump_marks {
            incs[m.step] -= &m.jump;
        }
        incs
    }

    /// Indices of steps that carry at least one jump.
    pub fn jump_steps(&self) -> Vec<usize> {
        self.record.jump_marks.iter().map(|m| m.step).collect()
    }
}

fn standard_normal_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vector {
    Vector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)))
}

/// One Laplace draw with scale `b` by inversion.
fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let mut u: f64 = rng.random::<f64>() - 0.5;
    while u == -0.5 {
        u = rng.random::<f64>() - 0.5;
    }
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn sample_jump<R: RngCore>(law: &JumpLaw, d: usize, rng: &mut R) -> Vector {
    match law {
        JumpLaw::None => Vector::zeros(d),
        JumpLaw::Laplace { scales } => {
            Vector::from_iterator(d, scales.iter().map(|b| laplace(*b, rng)))
        }
        JumpLaw::Custom(c) => (c.sampler)(rng, d),
    }
}

/// Compound-Poisson increment over a step of length `delta`: a
/// Poisson(`intensity·delta`) number of i.i.d. jumps, summed. Also returns
/// the number of jumps.
pub fn sample_compound_poisson<R: RngCore>(
    intensity: f64,
    law: &JumpLaw,
    delta: f64,
    d: usize,
    rng: &mut R,
) -> (Vector, usize) {
    let rate = intensity * delta;
    if !(rate > 0.0) || matches!(law, JumpLaw::None) {
        return (Vector::zeros(d), 0);
    }
    let count = Poisson::new(rate)
        .map(|p| p.sample(rng) as usize)
        .unwrap_or(0);
    let mut total = Vector::zeros(d);
    for _ in 0..count {
        total += sample_jump(law, d, rng);
    }
    (total, count)
}

/// Default burn-in time for non-Gaussian starts: `max(50/κ_stab, 100)`.
pub fn default_burn_in(model: &OUModel) -> Result<f64> {
    let rate = decay_rate_estimate(model.drift())?;
    Ok((50.0 / rate).max(100.0))
}

/// Draws the initial state.
///
/// Gaussian models get an exact draw from `N(m, C_∞)`. With jumps the same
/// Gaussian moment-matched draw is followed by a burn-in run, whose terminal
/// state is returned.
pub fn stationary_init<R: RngCore>(
    model: &OUModel,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<Vector> {
    let d = model.dim();
    let levy = model.levy();
    let mut q = levy.diffusion_covariance();
    let mut forcing = levy.drift.clone();
    if levy.has_jumps() {
        q += levy.jump_law.second_moment(d) * levy.jump_intensity;
        forcing += levy.jump_law.mean(d) * levy.jump_intensity;
    }
    let cov = lyapunov_solve(model.drift(), &q)?;
    let mean = model
        .drift()
        .as_matrix()
        .clone()
        .lu()
        .solve(&forcing)
        .unwrap_or_else(|| Vector::zeros(d));
    let chol = Cholesky::new(cov.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: crate::numkit::sym_eig_extremes(&cov)
            .map(|e| e.0)
            .unwrap_or(f64::NAN),
    })?;
    let x0 = mean + chol.l() * standard_normal_vector(d, rng);

    let burn_in = match cfg.burn_in {
        Some(b) => b,
        None if levy.has_jumps() => default_burn_in(model)?,
        None => 0.0,
    };
    let burn_steps = (burn_in / cfg.delta).round() as usize;
    if burn_steps == 0 {
        return Ok(x0);
    }
    let mut x = x0;
    let a = model.drift().as_matrix();
    for _ in 0..burn_steps {
        let (next, _, _) = euler_step(a, levy, &x, cfg.delta, rng);
        x = next;
    }
    Ok(x)
}

fn euler_step<R: RngCore>(
    a: &Matrix,
    levy: &LevySpec,
    x: &Vector,
    delta: f64,
    rng: &mut R,
) -> (Vector, Vector, Option<(Vector, usize)>) {
    let d = x.len();
    let gauss = &levy.sigma * standard_normal_vector(d, rng) * delta.sqrt();
    let mut next = x - (a * x) * delta + &levy.drift * delta + &gauss;
    let mut jump = None;
    if levy.has_jumps() {
        let (j, count) =
            sample_compound_poisson(levy.jump_intensity, &levy.jump_law, delta, d, rng);
        if count > 0 {
            next += &j;
            jump = Some((j, count));
        }
    }
    (next, gauss, jump)
}

/// Euler–Maruyama path from a given initial state. Does not require `Σ` to
/// be invertible.
pub fn simulate_from<R: RngCore>(
    a: &Matrix,
    levy: &LevySpec,
    x0: Vector,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<SimulatedPath> {
    cfg.validate()?;
    let d = x0.len();
    if a.nrows() != d || a.ncols() != d || levy.sigma.nrows() != d || levy.drift.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: a.nrows(),
        });
    }
    let n = cfg.steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut gauss_increments = Vec::with_capacity(n);
    let mut jump_marks = Vec::new();
    states.push(x0);
    for k in 0..n {
        let (next, gauss, jump) = euler_step(a, levy, &states[k], cfg.delta, rng);
        if let Some((jump, count)) = jump {
            jump_marks.push(JumpMark {
                step: k,
                count,
                jump,
            });
        }
        gauss_increments.push(gauss);
        states.push(next);
    }
    Ok(SimulatedPath {
        path: SamplePath {
            delta: cfg.delta,
            states,
        },
        record: PathRecord {
            gauss_increments,
            jump_marks,
        },
    })
}

/// Simulates a stationary path; all randomness comes from `cfg.seed`.
pub fn simulate_path(model: &OUModel, cfg: &SimConfig) -> Result<SimulatedPath> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let x0 = stationary_init(model, cfg, &mut rng)?;
    simulate_from(model.drift().as_matrix(), model.levy(), x0, cfg, &mut rng)
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t,x1..xd` rows with 17 significant digits.
pub fn write_path_csv<W: Write>(path: &SamplePath, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = path.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (k, x) in path.states.iter().enumerate() {
        let mut row = Vec::with_capacity(d + 1);
        row.push(fmt_f64(k as f64 * path.delta));
        row.extend(x.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a path written by [`write_path_csv`]. The step is taken from the
/// time column.
pub fn read_path_csv<R: Read>(input: R) -> Result<SamplePath> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        return Err(Error::Config("path CSV header must be `t,x1..xd`".into()));
    }
    for (i, name) in header.iter().enumerate().skip(1) {
        if name != format!("x{i}") {
            return Err(Error::Config(format!(
                "unexpected path CSV column `{name}`"
            )));
        }
    }
    let d = header.len() - 1;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("row {}: cannot parse `{s}`: {e}", line + 2)))
        };
        times.push(parse(&rec[0])?);
        let x: Result<Vec<f64>> = (1..=d).map(|i| parse(&rec[i])).collect();
        states.push(Vector::from_vec(x?));
    }
    if times.len() < 2 {
        return Err(Error::Config("path CSV needs at least two rows".into()));
    }
    let delta = times[1] - times[0];
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - delta).abs() <= 1e-9 * delta.max(w[1].abs()));
    if !(delta > 0.0) || !uniform {
        return Err(Error::Config(
            "path CSV time column must be uniformly increasing".into(),
        ));
    }
    SamplePath::new(delta, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DriftMatrix;

    fn gaussian_model(a: Matrix, sigma: Matrix) -> OUModel {
        OUModel::new(
            DriftMatrix::new(a).unwrap(),
            LevySpec::gaussian(sigma).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_euler_without_noise() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8]);
        let levy = LevySpec {
            drift: Vector::zeros(2),
            sigma: Matrix::zeros(2, 2),
            jump_intensity: 0.0,
            jump_law: JumpLaw::None,
        };
        let x0 = Vector::from_vec(vec![1.0, -2.0]);
        let cfg = SimConfig::new(1.0, 0.01, 0);
        let sim = simulate_from(&a, &levy, x0.clone(), &cfg, &mut rng_from_seed(1)).unwrap();
        let step = Matrix::identity(2, 2) - &a * 0.01;
        let mut x = x0;
        for state in &sim.path.states {
            assert!((state - &x).amax() <= 1e-14 * x.amax().max(1e-300));
            x = &step * x;
        }
    }

    #[test]
    fn no_jumps_no_marks() {
        let model = gaussian_model(Matrix::identity(2, 2), Matrix::identity(2, 2));
        let sim = simulate_path(&model, &SimConfig::new(10.0, 0.01, 4)).unwrap();
        assert!(sim.record.jump_marks.is_empty());
        assert_eq!(sim.path.states.len(), 1001);
        assert_eq!(sim.record.gauss_increments.len(), 1000);
    }

    #[test]
    fn same_seed_same_path() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.5]);
        let levy = LevySpec::with_laplace_jumps(Matrix::identity(2, 2), 5.0, 1.0).unwrap();
        let model = OUModel::new(DriftMatrix::new(a).unwrap(), levy).unwrap();
        let mut cfg = SimConfig::new(20.0, 0.01, 77);
        cfg.burn_in = Some(5.0);
        let p = simulate_path(&model, &cfg).unwrap();
        let q = simulate_path(&model, &cfg).unwrap();
        assert_eq!(p, q);
        assert!(!p.record.jump_marks.is_empty());
        assert!(p.reconstruction_error(model.drift(), &model.levy().drift) <= 1e-12);
    }

    #[test]
    fn zero_intensity_gives_zero_jump() {
        let law = JumpLaw::laplace(1.0, 3);
        let mut rng = rng_from_seed(0);
        for _ in 0..100 {
            let (j, n) = sample_compound_poisson(0.0, &law, 0.01, 3, &mut rng);
            assert_eq!(n, 0);
            assert_eq!(j, Vector::zeros(3));
        }
    }

    #[test]
    fn laplace_single_jump_variance() {
        // Var = 2 b² for b = 1.5
        let mut rng = rng_from_seed(9);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| laplace(1.5, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        // sd of the variance estimator: sqrt((μ4 − σ⁴)/n) with μ4 = 24 b⁴
        let se = ((24.0 - 4.0) * 1.5f64.powi(4) / n as f64).sqrt();
        assert!((var - 4.5).abs() < 4.0 * se, "var {var}");
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.0, 0.01, 0).validate().is_err());
        assert!(SimConfig::new(1.0, 2.0, 0).validate().is_err());
        let mut c = SimConfig::new(1.0, 0.1, 0);
        c.burn_in = Some(-1.0);
        assert!(c.validate().is_err());
        assert_eq!(SimConfig::new(1.0, 0.1, 0).steps(), 10);
    }

    #[test]
    fn split_seed_spreads() {
        let a = split_seed(42, 0);
        let b = split_seed(42, 1);
        assert_ne!(a, b);
        assert_eq!(a, split_seed(42, 0));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let model = gaussian_model(Matrix::identity(3, 3), Matrix::identity(3, 3) * 0.7);
        let sim = simulate_path(&model, &SimConfig::new(1.0, 0.01, 12)).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&sim.path, &mut buf).unwrap();
        let back = read_path_csv(buf.as_slice()).unwrap();
        assert_eq!(back.states, sim.path.states);
        assert_eq!(back.delta, 0.01);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2,x3\n"));
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(read_path_csv("s,x1\n0,1\n1,2\n".as_bytes()).is_err());
        assert!(read_path_csv("t,y\n0,1\n1,2\n".as_bytes()).is_err());
    }
}
