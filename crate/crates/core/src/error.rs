use std::path::PathBuf;

use crate::quarter::Quarter;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("all labels are identical; logistic regression is not identified")]
    DegenerateLabels,
    #[error("iterative fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("overlap violated for {} control households (e.g. {})", .households.len(), .households.first().map(String::as_str).unwrap_or("-"))]
    OverlapViolation { households: Vec<String> },
    #[error("window {window} is missing quarter {quarter}")]
    MissingQuarter { window: String, quarter: Quarter },
    #[error("percent change undefined for a zero baseline")]
    UndefinedPercent,
    #[error("unknown level {level:?} for covariate {covariate}")]
    UnknownLevel { covariate: String, level: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: line {line}: {message}")]
    Schema { path: PathBuf, line: u64, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
