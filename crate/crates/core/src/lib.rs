//! # gammalab
//!
//! A numerical laboratory for Bakry–Émery Gamma calculus on Gaussian space and
//! its use in bounding the variance of spin-glass free energies.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`rng`] | counter-based keyed random streams, reproducible under any thread count |
//! | [`stats`] | batch-means Monte Carlo estimators, `L^p` norms, auto-doubling |
//! | [`gaussian`] | log-sum-exp free energy `f_β`, softmax gradient/Hessian, `Γ`/`Γ₂`, Gaussian measures |
//! | [`functions`] | the built-in smooth test functions (free energy, linear, Hermite, coordinate max) |
//! | [`semigroup`] | Mehler estimator of `P_t`, decay curves `I(t)`, `I_r(t)`, dynamical variance |
//! | [`criteria`] | inequality checkers and bound evaluators along the semigroup |
//! | [`models`] | REM and SK instances, exact Gibbs sums, overlap enumeration, model bounds |
//!
//! Every Monte Carlo routine takes an explicit [`RngStream`] and returns an
//! [`EstimateWithCI`]; outer sample `i` always draws from `stream.derive(i)`, so
//! results are bit-identical whether or not the `parallel` feature is enabled
//! and whatever size the rayon pool has.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod functions;
pub mod gaussian;
pub mod grid;
pub mod models;
pub mod par;
pub mod rng;
pub mod semigroup;
pub mod stats;

pub use criteria::{InequalityReport, PsiFunction, Relation, Verdict};
pub use functions::{
    CoordinateMax, FreeEnergy, Hessian, HermiteSquare, Linear, Product, SmoothFunction,
};
pub use gaussian::{BetaParam, GaussianMeasure, SoftmaxHessian, SoftmaxState};
pub use grid::TimeGrid;
pub use rng::RngStream;
pub use semigroup::{CurveKind, DecayCurve, MehlerConfig};
pub use stats::{EstimateStatus, EstimateWithCI, EstimatorConfig};

use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input vector is empty")]
    EmptyInput,

    #[error("non-finite entry {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("inverse temperature must be positive and finite, got {0}")]
    InvalidBeta(f64),

    #[error("covariance matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("covariance matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{param} = {value} is outside the regime {regime}")]
    Regime {
        param: &'static str,
        value: f64,
        regime: String,
    },

    #[error("psi is not integrable (condition `int_0^inf e^(-2t) int_t^inf e^(2s) psi(s) ds dt < inf` fails): {0}")]
    NotIntegrable(String),

    #[error("exact enumeration of 2^{n} configurations exceeds the capacity 2^{max}")]
    Capacity { n: usize, max: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("truncation horizon too short: tail carries {fraction:.3} of the total")]
    TailTooLarge { fraction: f64 },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("serialization failed: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
