use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("{ticker} {date}: {rule} ({field} = {value})")]
    Validation {
        ticker: String,
        date: NaiveDate,
        field: String,
        rule: String,
        value: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
