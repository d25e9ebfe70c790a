use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("budget exceeded: {what} needs {needed}, limit is {limit}")]
    Budget {
        what: String,
        needed: String,
        limit: String,
    },
    #[error("inverse of zero")]
    ZeroInverse,
    #[error("field level mismatch: {0}")]
    LevelMismatch(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("degenerate construction: {0}")]
    Degenerate(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("process failed: {0}")]
    Process(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn budget(what: impl Into<String>, needed: impl ToString, limit: impl ToString) -> Self {
        Error::Budget {
            what: what.into(),
            needed: needed.to_string(),
            limit: limit.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
