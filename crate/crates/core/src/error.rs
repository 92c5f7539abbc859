//! Crate-wide error type. Variants are shared across modules so that the
//! engine can propagate model failures without generic error plumbing.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix expected to be Hermitian positive definite failed its
    /// Cholesky factorization (non-positive pivot).
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// A matrix expected to be Hermitian was not, within tolerance.
    #[error("matrix is not Hermitian")]
    NotHermitian,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The multiplier bracket could not be expanded to cover the power
    /// budget; indicates non-finite inputs or a non-positive budget.
    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),

    /// Starting point handed to the engine violates the feasible set.
    #[error("infeasible starting point (distance to projection {0:.3e})")]
    InfeasibleStart(f64),

    /// Trace shorter than a diagnostic requires.
    #[error("trace too short: need more than {need} rows, have {have}")]
    TraceTooShort { need: usize, have: usize },

    /// The matrix I - U^H H V was singular when forming a weight update.
    #[error("singular weight matrix in surrogate update")]
    SingularW,

    /// Aggregate statistics cannot produce a unique minimizer.
    #[error("degenerate aggregate statistics: {0}")]
    DegenerateStats(String),

    /// A non-finite value was produced where a finite one is required.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
