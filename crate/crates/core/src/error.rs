use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed passage: {0}")]
    MalformedPassage(String),

    #[error("degenerate instance {id:?}: no non-punctuation context words")]
    DegenerateInstance { id: String },

    #[error("{path}:{line}: {reason}")]
    Record { path: PathBuf, line: usize, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("id {id} out of range for table with {rows} rows")]
    IdOutOfRange { id: usize, rows: usize },

    #[error("softmax over a fully masked input")]
    AllMasked,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error at byte offset {offset}: {reason}")]
    Checkpoint { offset: usize, reason: String },

    #[error("checkpoint manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("requested {requested} control windows but the corpus has only {available}")]
    NotEnoughWindows { requested: usize, available: usize },

    #[error("target word {0:?} is not among the candidates")]
    TargetNotInCandidates(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than by the caller.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedPassage(_)
                | Error::DegenerateInstance { .. }
                | Error::Record { .. }
                | Error::Io { .. }
                | Error::Checkpoint { .. }
                | Error::ManifestMismatch(_)
                | Error::EmptyInput(_)
                | Error::NotEnoughWindows { .. }
                | Error::TargetNotInCandidates(_)
        )
    }
}
