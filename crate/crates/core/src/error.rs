use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variants are grouped by the exit code the CLI maps them to, see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("degenerate prompt: {0:?} contains no scoreable content")]
    DegeneratePrompt(String),

    #[error("invalid morpheme count: {0}")]
    InvalidMorphemeCount(i64),

    #[error("box length out of range: {0} is not in (0, 1]")]
    BoxLengthOutOfRange(f64),

    #[error("invalid score: backend returned {0}")]
    InvalidScore(f64),

    #[error("scorer backend failure: {0}")]
    Backend(String),

    #[error("request {index} of batch failed: {source}")]
    BatchElement {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("insufficient raters: {0} would remain, need at least 2")]
    InsufficientRaters(usize),

    #[error("degenerate rater {rater}: zero variance in {dimension} scores")]
    DegenerateRater { rater: String, dimension: String },

    #[error("cannot split: {0}")]
    CannotSplit(String),

    #[error("{}: row {row}: {message}", path.display())]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },

    #[error("image decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn stats(msg: impl Into<String>) -> Self {
        Error::Statistics(msg.into())
    }

    pub(crate) fn row(path: impl Into<PathBuf>, row: usize, message: impl Into<String>) -> Self {
        Error::Row {
            path: path.into(),
            row,
            message: message.into(),
        }
    }

    /// 0 success, 1 data error, 2 configuration error, 3 backend failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Backend(_) | Error::InvalidScore(_) => 3,
            Error::BatchElement { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
