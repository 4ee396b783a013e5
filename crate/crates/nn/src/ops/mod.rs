//! Differentiable operations, each recorded as one node on the [`Tape`](crate::Tape).

mod basic;
mod conv;
mod dense;
mod loss;
mod recurrent;

pub use conv::{conv1d_output_len, Conv1dGeometry};
pub use loss::{softmax_rows, SoftmaxXent};
pub use recurrent::{BiLstmLayer, GruWeights, LstmWeights};
