use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("target lemma `{0}` does not occur in the corpus")]
    EmptyDataset(String),

    #[error("document `{doc_id}`: {message}")]
    BadDocument { doc_id: String, message: String },

    #[error("snippet {index}: invalid {field}: {message}")]
    InvalidSnippet {
        index: usize,
        field: &'static str,
        message: String,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("embeddings missing for {} lemma(s): {}", .0.len(), .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("dimension mismatch in {block}: expected {expected}, found {found}")]
    Dimension {
        block: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("not enough draws: need at least {needed}, have {have}")]
    TooFewDraws { needed: usize, have: usize },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
