use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("drift matrix is not stable")]
    NotStable,

    #[error("stability undecidable: Lyapunov system condition estimate {condition:.3e} exceeds {limit:.0e}")]
    StabilityUndecidable { condition: f64, limit: f64 },

    #[error("Lyapunov residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    LyapunovResidual { residual: f64, tolerance: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("singular second-moment matrix: smallest eigenvalue {min_eigenvalue:.3e}, condition estimate {condition:.3e}")]
    SingularDesign { min_eigenvalue: f64, condition: f64 },

    #[error("failed to generate a stable drift matrix after {steps} diagonal shifts")]
    GenerationFailed { steps: usize },

    #[error("could only generate {achieved} of {requested} separated hypotheses after {attempts} attempts")]
    HypothesisSeparation {
        achieved: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("grid entirely over-penalizes: every candidate produced a zero estimate")]
    GridOverPenalizes,

    #[error("missing recorded increments: {0}")]
    MissingIncrements(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
