use thiserror::Error;

/// Errors produced by the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),
    #[error("kernel is not reversible (detailed balance violated by {violation:e} at ({i}, {j}))")]
    NotReversible { i: usize, j: usize, violation: f64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("singular fit: {0}")]
    SingularFit(String),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("parse error on line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::DomainError(msg.into())
}
