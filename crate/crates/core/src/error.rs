use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),

    #[error("dimension `{name}`: value {value} outside its domain")]
    OutOfBounds { name: String, value: String },

    #[error("missing value for dimension `{0}`")]
    MissingValue(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid space definition: {0}")]
    InvalidSpace(String),

    #[error("expression error in `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error("{path}: line {line}, field `{field}`: {message}")]
    Parse {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("sampling exhausted: found {found} of {needed} valid points (validity rate {rate:.4})")]
    SamplingExhausted {
        needed: usize,
        found: usize,
        rate: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("regression failure: {0}")]
    RegressionFailure(String),

    #[error("objective `{objective}` failed: {message}")]
    Objective { objective: String, message: String },

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("grid of {count} points exceeds the cap of {cap}")]
    GridTooLarge { count: u128, cap: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::NumericalFailure(message.into())
    }
}
