use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("truncated vector file: {0}")]
    TruncatedVectors(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("store must contain at least one word")]
    EmptyStore,

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("unknown word `{0}`")]
    UnknownWord(String),

    #[error("invalid slice id: language and period must be non-empty")]
    InvalidSlice,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all tokens pruned as noise")]
    AllPruned,

    #[error("not enough neighbor candidates: need {needed}, found {found}")]
    InsufficientNeighbors { needed: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("key mismatch: {0}")]
    KeyMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
