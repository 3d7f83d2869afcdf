use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Structural problem in an input file. `record` is the zero-based record
    /// index (or line number for line-oriented formats) when one applies.
    #[error("parse error{}: {message}", record.map(|r| format!(" at record {r}")).unwrap_or_default())]
    Parse {
        record: Option<usize>,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema mismatch: model expects {expected}, got {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("no overlapping time window between historical and realtime feeds")]
    EmptyOverlap,

    #[error("missing embedding for {0}")]
    MissingEmbedding(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(record: impl Into<Option<usize>>, message: impl Into<String>) -> Self {
        Error::Parse {
            record: record.into(),
            message: message.into(),
        }
    }
}
