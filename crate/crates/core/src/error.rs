//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::sdp::SolveStatus;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A method needs at least one step.
    #[error("step count must be at least 1 (got {0})")]
    InvalidStepCount(usize),

    /// A schedule, certificate or problem failed a structural check.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A schedule file could not be parsed.
    #[error("schedule file: {}", format_location(*.row, *.col, .message))]
    ScheduleFormat {
        row: Option<usize>,
        col: Option<usize>,
        message: String,
    },

    /// A simulation produced a non-finite value or gradient.
    #[error("trajectory diverged at step {step}: {what} is not finite")]
    Diverged { step: usize, what: &'static str },

    #[error("oracle carries no minimizer / optimal value metadata")]
    MissingMinimizer,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Input to an eigenvalue routine was not symmetric.
    #[error("matrix is not symmetric (max |M - M^T| = {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    /// A multiplier vector violates one of the linear equalities linking lambda and tau.
    #[error("multiplier equality {index} violated by {residual:.3e}")]
    MultiplierEquality { index: usize, residual: f64 },

    /// A parameter lies outside the range where an analytic result applies.
    #[error("{0}")]
    OutOfRange(String),

    /// The SDP solver did not reach an optimal solution.
    #[error("SDP solver finished with status {status:?}: {context}")]
    Solver {
        status: SolveStatus,
        context: String,
    },

    /// Step-size recovery from a relaxation solution failed on every path.
    #[error("step recovery failed: substitution residual {verbatim:.3e} (verbatim), {forward:.3e} (forward solve)")]
    Recovery { verbatim: f64, forward: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_location(row: Option<usize>, col: Option<usize>, message: &str) -> String {
    match (row, col) {
        (Some(r), Some(c)) => format!("row {r}, column {c}: {message}"),
        (Some(r), None) => format!("row {r}: {message}"),
        _ => message.to_string(),
    }
}
