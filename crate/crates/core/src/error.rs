use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time {requested} outside the generated window [{start}, {end}]")]
    OutOfWindow { requested: f64, start: f64, end: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("non-finite state in {context} at t = {time}")]
    NonFinite { context: &'static str, time: f64 },

    #[error(
        "Lyapunov-Perron iteration did not converge in {iterations} iterations \
         (last weighted change {last_change:e}, contraction estimate {contraction})"
    )]
    NotConverged {
        iterations: usize,
        last_change: f64,
        contraction: f64,
    },

    #[error("leading-order fixed point diverged: {0}")]
    FixedPointDivergence(String),

    #[error("objective is not finite at d = {d}")]
    NonFiniteObjective { d: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("matrix is not positive semidefinite")]
    NotPositiveDefinite,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
