use thiserror::Error;

use crate::corpus::CorpusError;
use crate::embedstore::EmbedError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),

    #[error(transparent)]
    Embed(#[from] EmbedError),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite training loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("linear system is not positive definite")]
    NotPositiveDefinite,

    #[error("split seed {seed}: {source}")]
    AtSeed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("permutation {index}: {source}")]
    AtPermutation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn at_seed(self, seed: u64) -> Self {
        Error::AtSeed {
            seed,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input files or settings rather than by
    /// a numerical failure during fitting.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Corpus(_) | Error::Embed(_) | Error::Config(_) | Error::Format(_) | Error::Io { .. } => true,
            Error::Dimension { .. } | Error::Degenerate(_) => true,
            Error::AtSeed { source, .. } | Error::AtPermutation { source, .. } => source.is_input_error(),
            Error::NonFinite(_) | Error::Diverged { .. } | Error::NotPositiveDefinite => false,
        }
    }
}
