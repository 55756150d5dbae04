use thiserror::Error;

use crate::dynamics::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("configuration outside the feasible set: |q_{index}| = {value:.6} > pi/2")]
    Infeasible { index: usize, value: f64 },

    #[error("singular tendon moment arm: c1 + g1(q) = {value:e}")]
    SingularMomentArm { value: f64 },

    #[error("tension constraint violated: u = ({u1:.6e}, {u2:.6e})")]
    TensionViolation { u1: f64, u2: f64 },

    #[error("rank-deficient {what}")]
    RankDeficient { what: String },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("simulation aborted at t = {t:.6} s: {reason}")]
    Aborted {
        t: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("scenario error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Scenario { line: Option<usize>, message: String },

    #[error("{phase} failed for scenario `{scenario}`: {source}")]
    Phase {
        scenario: String,
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

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
