use thiserror::Error;

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite gradient in parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("weights.bin holds {actual} bytes, expected {expected}")]
    TruncatedWeights { expected: u64, actual: u64 },

    #[error("weights.bin checksum mismatch: manifest says {expected:08x}, file hashes to {actual:08x}")]
    ChecksumMismatch { expected: u32, actual: u32 },

    #[error("parameter `{name}`: {reason}")]
    ParameterLayout { name: String, reason: String },

    #[error("unsupported bundle format version {0}")]
    UnknownFormatVersion(u32),

    #[error("bundle architecture is `{found}`, expected `{expected}`")]
    ArchitectureMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("bundle manifest: {0}")]
    Json(#[from] serde_json::Error),
}

impl NnError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        NnError::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        NnError::InvalidArgument {
            op,
            reason: reason.into(),
        }
    }
}
