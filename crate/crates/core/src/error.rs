use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported format `{0}`")]
    UnsupportedFormat(String),

    #[error("prompt has {tokens} tokens, over the provider limit of {limit}")]
    PromptTooLong { tokens: usize, limit: usize },

    #[error("{provider} provider failed after {attempts} attempt(s): {message}")]
    Transport {
        provider: &'static str,
        attempts: usize,
        message: String,
    },

    #[error("{provider} provider returned a malformed response: {message}")]
    Protocol { provider: &'static str, message: String },

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum mismatch for `{file}`")]
    Checksum { file: String },

    #[error("graph invariant violated: {0}")]
    Invariant(String),

    #[error("index build aborted after {chunks_done} of {chunks_total} chunks: {cause}")]
    BuildAborted {
        chunks_done: usize,
        chunks_total: usize,
        cause: Box<Error>,
    },

    /// Retrieval stopped at `depth`; `partial_trace` holds every record
    /// written before the failure.
    #[error("retrieval aborted at depth {depth}: {cause}")]
    SearchAborted {
        depth: usize,
        partial_trace: Vec<crate::retrieval::TraceRecord>,
        cause: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    /// Whether retrying the same request may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}
