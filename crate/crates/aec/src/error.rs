use thiserror::Error;

/// Crate-wide error type. Variants are kept distinct where callers (or tests)
/// need to tell failure classes apart, e.g. the checkpoint reader.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("{op}: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("wav: {0}")]
    WavFormat(String),

    #[error("checkpoint: bad magic {0:?}")]
    CheckpointMagic(String),

    #[error("checkpoint: manifest does not match payload: {0}")]
    CheckpointLength(String),

    #[error("checkpoint: unsupported dtype {0:?}")]
    CheckpointDtype(String),

    #[error("checkpoint: malformed manifest: {0}")]
    CheckpointManifest(String),

    #[error("parameter {name}: shape mismatch: source {src:?} vs target {dst:?}")]
    ParamShape {
        name: String,
        src: Vec<usize>,
        dst: Vec<usize>,
    },

    #[error("non-finite loss at step {step}: {term} = {value}")]
    NonFiniteLoss {
        step: usize,
        term: &'static str,
        value: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }
}
