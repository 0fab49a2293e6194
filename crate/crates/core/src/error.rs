use thiserror::Error;

use crate::grid::Location;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("expected a field at {expected:?}, found {found:?}")]
    WrongLocation { expected: Location, found: Location },

    #[error("coefficient must be non-negative and finite, found {value} at cell ({i}, {j})")]
    NegativeCoefficient { i: usize, j: usize, value: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e}, target {target:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("compatibility violation: right-hand side has non-zero mean {mean:e} for a singular (constant null space) system")]
    Compatibility { mean: f64 },

    #[error("singular matrix (null-space dimension {null_dim})")]
    Singular { null_dim: usize },

    #[error("dense system too large: {0} unknowns (limit 4096)")]
    TooLarge(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("stability bound violated at step {step}: lhs {lhs:e} > rhs {rhs:e}")]
    StabilityViolation { step: usize, lhs: f64, rhs: f64 },

    #[error(
        "step {step} (t = {t}) failed during {stage}: {source}; state at failure: |u| = {norm_u:e}, |w| = {norm_w:e}"
    )]
    StepFailed {
        step: usize,
        t: f64,
        stage: &'static str,
        norm_u: f64,
        norm_w: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the root cause is a linear solver failure.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NotConverged { .. } | Error::Compatibility { .. } | Error::Singular { .. } => true,
            Error::StepFailed { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
