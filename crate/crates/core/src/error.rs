use thiserror::Error;

/// Errors raised by the solvers and their supporting machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("assumption check failed: {0}")]
    Assumption(String),

    #[error("reaction `{name}` returned a non-finite value at s = {at}")]
    NonFinite { name: String, at: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("assembled operator is not an M-matrix: {0}")]
    NotMMatrix(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {final_residual:e})")]
    LinearNonConvergence {
        iterations: usize,
        final_residual: f64,
        residual_history: Vec<f64>,
    },

    #[error("zero pivot at row {0}")]
    ZeroPivot(usize),

    #[error("{what} did not converge within {limit} iterations (last step {last_step:e})")]
    NonConvergence {
        what: &'static str,
        limit: usize,
        last_step: f64,
    },

    #[error("monotonicity violated at sweep {sweep}: {violation:e} exceeds tolerance {tolerance:e}")]
    MonotonicityViolation { sweep: usize, violation: f64, tolerance: f64 },

    #[error("{0} is not a subsolution (worst violation {1:e})")]
    NotSubsolution(&'static str, f64),

    #[error("no admissible epsilon: {0}")]
    NoEpsilon(String),

    #[error("explicit time stepping blew up at step {step} (sup {sup:e})")]
    BlowUp { step: usize, sup: f64 },

    #[error("problem too large for the dense reference solver: {0} unknowns")]
    TooLarge(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of an iterative method to reach its tolerance.
    pub fn is_non_convergence(&self) -> bool {
        matches!(
            self,
            Error::LinearNonConvergence { .. }
                | Error::NonConvergence { .. }
                | Error::MonotonicityViolation { .. }
                | Error::BlowUp { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
