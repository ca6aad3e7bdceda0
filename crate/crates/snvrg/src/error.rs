use thiserror::Error;

/// Errors surfaced by the optimization and accounting routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A routine that assumes the analysis-grade schedule refused to run.
    #[error("schedule precondition violated: {0}")]
    SchedulePrecondition(String),

    #[error("evaluation accounting mismatch: {0}")]
    AccountingMismatch(String),

    /// A numerically checked analysis inequality failed to hold.
    #[error("analysis invariant violated: {0}")]
    InvariantViolation(String),

    /// An iterate left the representable range, typically from a too-large step.
    #[error("iterate diverged (non-finite coordinate) at step {step}")]
    Diverged { step: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
