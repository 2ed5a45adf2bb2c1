use std::path::PathBuf;

/// Errors raised by the hashing library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty pair set")]
    EmptyPairSet,

    #[error("empty sample list")]
    EmptySamples,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "hash length m={m} exceeds the data dimensionality bound m <= min(n, n')={bound}"
    )]
    DimensionalityCap { m: usize, bound: usize },

    #[error("hash length m={m} exceeds the number of the basis vectors, m <= min(l, l')={bound}")]
    BasisCap { m: usize, bound: usize },

    #[error("no negative pairs exist: the dataset has a single class")]
    NoNegativePairs,

    #[error("no positive pairs exist: no class has points in both modalities")]
    NoPositivePairs,

    #[error("basis size {requested} exceeds population {available}")]
    BasisTooLarge { requested: usize, available: usize },

    #[error("hamming length mismatch: {0} vs {1}")]
    CodeLengthMismatch(usize, usize),

    #[error("duplicate id {0}")]
    DuplicateId(u64),

    #[error("empty index")]
    EmptyIndex,

    #[error("query has no relevant items")]
    NoRelevantItems,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
