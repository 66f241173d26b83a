use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("function is not finite at Fock level n = {n}")]
    NonFinite { n: usize },

    #[error("Fock level {n} outside 0..={cutoff}")]
    LevelOutOfRange { n: usize, cutoff: usize },

    #[error("coherent amplitude |alpha|^2 = {norm_sqr:.4} exceeds cutoff/4 = {limit:.4}")]
    AmplitudeTooLarge { norm_sqr: f64, limit: f64 },

    #[error("not a density matrix: {0}")]
    InvalidState(String),

    #[error("{quantity} is undefined for a state with <n> = {mean_n:e}")]
    Undefined { quantity: &'static str, mean_n: f64 },

    #[error("series did not converge: next term {next_term:e} after {order} orders")]
    SeriesNotConverged { order: usize, next_term: f64 },

    #[error("steady state is not unique: smallest pinned eigenvalue estimate {estimate:e} below {tolerance:e}")]
    DegenerateNullspace { estimate: f64, tolerance: f64 },

    #[error("steady-state residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("integration step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("trace drifted by {drift:e} during propagation")]
    TraceDrift { drift: f64 },

    #[error("correlation decayed only to {ratio:e} of its initial value within the window; use a longer window")]
    InsufficientWindow { ratio: f64 },

    #[error("noise quadrature did not converge: refining the rule changed the spectrum by {change:e} of its peak")]
    QuadratureNotConverged { change: f64 },

    #[error("Wigner grid does not cover the state: {0}")]
    GridTooSmall(String),

    #[error("cutoff {cutoff} reached without convergence (tail population {tail:e})")]
    CutoffNotConverged { cutoff: usize, tail: f64 },

    #[error("product dimension {dim} exceeds the limit {limit}")]
    DimensionLimit { dim: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
