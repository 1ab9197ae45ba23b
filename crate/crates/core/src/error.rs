use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("matrix is not symmetric positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter layouts differ: {0}")]
    LayoutMismatch(String),

    #[error("loss setup is missing {0}")]
    MissingLossInput(&'static str),

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("{path}:{line}: {message}")]
    Csv { path: PathBuf, line: u64, message: String },

    #[error("corrupt {format} stream: {detail}")]
    Corrupt { format: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("strategy {strategy} is not usable here: {reason}")]
    Strategy { strategy: String, reason: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
