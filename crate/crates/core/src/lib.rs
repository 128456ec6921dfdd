//! Simulation and sparse drift estimation for high-dimensional Lévy-driven
//! Ornstein–Uhlenbeck processes
//!
//! ```text
//! dX_t = -A X_t dt + dZ_t,     Z = b t + Σ W_t + compound Poisson jumps
//! ```
//!
//! The crate covers the full pipeline:
//!
//! * [`model`]: drift / Lévy specifications, stability checks, stationary
//!   moments via the Lyapunov equation and fixture generators.
//! * [`simulate`]: seeded Euler–Maruyama paths with compound-Poisson jumps.
//! * [`stats`]: jump filtering, sufficient statistics `(Ĉ_T, G_T)` and the
//!   restricted-eigenvalue / concentration diagnostics.
//! * [`estimators`]: likelihood, gradient, MLE and the Lasso / Slope
//!   estimators solved by accelerated proximal gradient.
//! * [`tuning`]: chronological cross-validation of the penalty level.
//! * [`experiments`]: Monte Carlo studies producing CSV / SVG reports.
//! * [`cli`]: the `sparselab` command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod model;
pub mod numkit;
pub mod plot;
pub mod simulate;
pub mod stats;
pub mod tuning;

pub use error::{Error, Result};

/// Dense matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense vector type used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
