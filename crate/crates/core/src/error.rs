use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("record {record}: {which} span ({start}, {end}) out of bounds for {len} tokens")]
    SpanOutOfBounds {
        record: String,
        which: &'static str,
        start: i64,
        end: i64,
        len: usize,
    },

    #[error("record {record}: relation `{label}` is not in the schema")]
    UnknownRelation { record: String, label: String },

    #[error("invalid instance {record}: {message}")]
    InvalidInstance { record: String, message: String },

    #[error("cannot verbalize label `{0}`")]
    Verbalize(String),

    #[error("handmade verbalizations: {0}")]
    Handmade(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("instance {record}: truncating to {max_len} source tokens would cut an entity mention")]
    Truncation { record: String, max_len: usize },

    #[error("token `{token}` is out of vocabulary in {context}")]
    OutOfVocabulary { token: String, context: String },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },

    #[error("prompt slot {index} out of range ({available} prompt embeddings)")]
    SlotOutOfRange { index: usize, available: usize },

    #[error("sequence of length {len} exceeds max_positions {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
