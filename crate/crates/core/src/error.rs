use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("argument {value} is outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("non-finite value on line {line}, column `{column}`")]
    NonFiniteValue { line: u64, column: String },

    #[error("unknown task `{value}` on line {line} (expected 1..4)")]
    UnknownTask { line: u64, value: String },

    #[error("group {0} has no fixations")]
    EmptyGroup(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("task {task} has {count} samples, need at least {needed}")]
    TooFewSamples { task: u8, count: usize, needed: usize },

    #[error("task {task}: requested {needed} fixation rows but only {available} are available")]
    InsufficientRows { task: u8, needed: usize, available: usize },

    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    NumericalDivergence { epoch: usize, what: &'static str },

    #[error("empty sample")]
    EmptySample,

    #[error("feature width mismatch: expected {expected}, got {got}")]
    FeatureWidthMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::Domain { .. }
            | Error::NumericalDivergence { .. } => ErrorClass::Numerical,
            Error::InvalidConfig(_) => ErrorClass::Usage,
            Error::File { .. } | Error::Io(_) => ErrorClass::Io,
            Error::Csv(e) if e.is_io_error() => ErrorClass::Io,
            Error::Context { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
