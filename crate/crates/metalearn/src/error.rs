use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("theory assumptions violated: {0}")]
    TheoryViolation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("task stream exhausted after {got} of {want} tasks")]
    StreamExhausted { got: usize, want: usize },

    #[error("regret requires a learner running in audit mode")]
    AuditModeOff,

    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),

    #[error("file not found: {0}")]
    FileNotFound(String),

    #[error("schema error in {path} (record {record}): {message}")]
    SchemaError {
        path: String,
        record: u64,
        message: String,
    },

    #[error("too few tasks: got {0}, need at least 3")]
    TaskCountMismatch(usize),

    #[error("all tasks have zero output variance")]
    AllTasksDegenerate,

    #[error("empty input")]
    EmptyInput,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
