//! Singer identification from song audio: vocal segmentation, vocal
//! separation, and singer classification, with a synthetic data generator
//! for end-to-end evaluation.

// Negated comparisons deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
pub mod classifier;
pub mod manifest;
pub mod norm;
pub mod segmenter;
pub mod separator;
pub mod signal;
pub mod synthdata;

pub use error::{Error, Result};

/// A trained model together with its mean training loss per epoch.
#[derive(Clone, Debug)]
pub struct Trained<M> {
    pub model: M,
    pub epoch_losses: Vec<f64>,
}
