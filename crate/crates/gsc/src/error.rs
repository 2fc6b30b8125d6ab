//! Error types shared across the engine.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GscError {
    #[error("grid too large: F^R = {size} exceeds cap {cap} (set GSC_MAX_GRID to raise)")]
    GridTooLarge { size: u128, cap: u64 },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("basis matrix is singular: {0}")]
    SingularBasis(String),

    #[error("quantization strength q must be nonnegative, got {0}")]
    NegativeQ(f64),

    #[error("non-finite state at t = {t} (step {step}); step size too large for current q")]
    NonFiniteState { t: f64, step: u64 },

    #[error("bad schedule parameter: {0}")]
    BadScheduleParam(String),

    #[error("schedule overflow: t_end = {t_end:.3e} needs {steps:.3e} steps at dt = {dt:.3e} (wall {wall:.3e})")]
    ScheduleOverflow {
        t_end: f64,
        dt: f64,
        steps: f64,
        wall: f64,
    },

    #[error("Newton refinement diverged at q = {q} after {iters} iterations (|grad| = {grad_norm:.3e})")]
    NewtonDiverged { q: f64, iters: usize, grad_norm: f64 },

    #[error("Newton refinement converged to a non-maximum (Hessian not negative definite) at q = {q}")]
    NotAMaximum { q: f64 },

    #[error("eta = {eta} too large: basins overlap above {max_eta} for one-hot grids")]
    EtaTooLarge { eta: f64, max_eta: f64 },

    #[error("probability vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("probability vector not normalized: sums to {0}")]
    NotNormalized(f64),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("config parse error: {0}")]
    ParseError(String),

    #[error("config validation failed:\n{}", .0.join("\n"))]
    ValidationError(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GscError>;
