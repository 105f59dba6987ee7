use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("degenerate atom: training vector {index} has zero norm")]
    DegenerateAtom { index: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error("cannot normalize a zero vector")]
    Normalization,

    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Dimension { .. } => "dimension",
            Error::DegenerateAtom { .. } => "degenerate-atom",
            Error::EmptyInput(_) => "empty-input",
            Error::Range(_) => "range",
            Error::Config(_) => "config",
            Error::Parameter(_) => "parameter",
            Error::Stratification(_) => "stratification",
            Error::DegenerateTraining(_) => "degenerate-training",
            Error::Normalization => "normalization",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
