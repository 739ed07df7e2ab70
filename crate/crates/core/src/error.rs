use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the retrieval toolkit.
///
/// Variants fall into two families that callers (the CLI in particular)
/// treat differently: data problems in inputs, and numeric failures such as
/// non-finite values or zero-norm vectors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { id: String, line: usize },

    #[error(
        "recipe {recipe:?} references image {image_ref:?} which is missing from the feature dump"
    )]
    DanglingImage { recipe: String, image_ref: String },

    #[error("recipe {id:?} is incomplete: {missing} is empty")]
    IncompleteRecipe { id: String, missing: &'static str },

    #[error("invalid text in {context}: {reason}")]
    InvalidText { context: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: String,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("zero-norm vector {0:?}")]
    ZeroNorm(String),

    #[error("missing image features for {0:?}")]
    MissingImageFeatures(String),

    #[error("id {0:?} not found")]
    UnknownId(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the numbers themselves rather than of the input
    /// structure.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::ZeroNorm(_))
    }
}
