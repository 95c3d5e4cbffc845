//! Shared error type for the solver library.

use thiserror::Error;

/// Errors surfaced by grid construction, parameter handling, and the
/// time-marching solver.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A model or contract field violates its admissible range.
    #[error("invalid parameter `{field}`: {constraint}")]
    InvalidParameter {
        field: &'static str,
        constraint: String,
    },

    /// A grid dimension or extent is unusable.
    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },

    /// A requested coordinate lies outside the truncated domain.
    #[error("coordinate `{name}` = {value} outside [0, {max}]")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        max: f64,
    },

    /// The iterative linear solver broke down or failed to reach the
    /// residual target within its iteration cap.
    #[error(
        "linear solve failed at time step {step}: residual {residual:.3e} \
         after {iterations} iterations"
    )]
    SolverFailure {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    /// Boundary-history access for a time level that was never recorded.
    #[error("boundary history has {have} levels, level {level} requested")]
    HistoryLevelMissing { level: usize, have: usize },

    /// Two fields or slices that must share a shape do not.
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
