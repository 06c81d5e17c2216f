use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The first argument puts mass where the second has none.
    #[error("absolute continuity violation at index {index}: reference has zero mass where the argument is positive")]
    AbsoluteContinuityViolation { index: usize },

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("skew parameter must lie strictly inside (0, 1), got {0}")]
    InvalidSkew(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("negative label {value} at row {row}")]
    LabelRange { row: usize, value: i64 },

    #[error("class {class} has {count} samples, need at least {required}")]
    ClassTooSmall { class: usize, count: usize, required: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("{context}: {message}")]
    Io { context: String, message: String },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, err: std::io::Error) -> Self {
        Error::Io { context: context.into(), message: err.to_string() }
    }
}
