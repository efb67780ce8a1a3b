use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no alphabet character survives normalization of {0:?}")]
    EmptyAfterNormalization(String),

    #[error("character {0:?} is not part of the PHOC alphabet")]
    CharNotInAlphabet(char),

    #[error("invalid PHOC configuration: {0}")]
    InvalidConfig(String),

    #[error("lexicon yields {found} distinct bigrams, {requested} requested")]
    InsufficientBigrams { found: usize, requested: usize },

    #[error("no anchor set with at most {max_k} anchors covers every box at IoU >= {min_iou}")]
    CoverageUnreachable { max_k: usize, min_iou: f64 },

    #[error("raw grid shape mismatch: expected {expected} activations, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("descriptor store is already sealed")]
    SealedStore,

    #[error("descriptor store has not been sealed")]
    NotSealed,

    #[error("cannot seal an empty descriptor store")]
    EmptyStore,

    #[error("i/o failure on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("version mismatch: {0}")]
    VersionMismatch(String),

    #[error("corrupt index: {0}")]
    CorruptIndex(String),

    #[error("PHOC configuration mismatch: index uses {index}, query side uses {query}")]
    ConfigMismatch { index: String, query: String },

    #[error("relevant set is empty")]
    EmptyRelevantSet,

    #[error("lexicon is empty")]
    EmptyLexicon,

    #[error("lexicon too small: {0}")]
    LexiconTooSmall(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("query set is empty")]
    EmptyQuerySet,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
