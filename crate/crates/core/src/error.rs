use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or argument lies outside the mathematical domain of the
    /// operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("unsupported dimension {dim}; at most {max} dimensions are supported")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("parse error: missing {0}")]
    MissingSection(String),

    #[error("unsupported feature: {0}")]
    Unsupported(String),

    #[error("invalid case data: {0}")]
    InvalidCase(String),

    #[error("initialization order: {0}")]
    Initialization(String),

    #[error("degenerate truth: validation responses are constant")]
    DegenerateTruth,

    #[error("missing baseline: {0}")]
    MissingBaseline(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
