use std::path::PathBuf;

use thiserror::Error;
use vocalid_nn::NnError;

use crate::signal::SignalError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Signal(#[from] SignalError),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("audio is {seconds:.3} s long; at least {minimum:.3} s is required")]
    TooShort { seconds: f64, minimum: f64 },

    #[error("training data for the {stage} stage contains only one class; both classes must be present")]
    SingleClass { stage: &'static str },

    #[error("pair {id}: mixture has {mixture} samples but vocal stem has {vocal}")]
    PairLengthMismatch { id: String, mixture: usize, vocal: usize },

    #[error("no vocal content found in the input")]
    NoVocalContent,

    #[error("class {class:?} has {count} songs; stratified {k}-fold splitting needs at least {k}")]
    TooFewForFolds { class: String, count: usize, k: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
