use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("sample {id}: missing {what}")]
    MissingLabel { id: String, what: &'static str },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("detector {adapter}: {message}")]
    Detector { adapter: String, message: String },

    #[error("no detections for sample {0:?}")]
    MissingDetections(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for vocabulary of size {size}")]
    IndexOutOfVocab { index: usize, size: usize },

    #[error("embedding file line {line}: {message}")]
    Embedding { line: usize, message: String },

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
