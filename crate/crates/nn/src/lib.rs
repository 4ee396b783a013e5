//! Minimal differentiable tensor core: layer-level reverse-mode gradients on
//! an explicit tape, Adam, finite-difference gradient checking, and a
//! bit-exact model bundle format. Everything runs in `f64` on the CPU.

pub mod adam;
pub mod bundle;
mod error;
mod gemm;
pub mod gradcheck;
pub mod ops;
mod params;
pub mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, clip_grad_norm, AdamConfig};
pub use bundle::{expect_architecture, load_bundle, save_bundle, validate_layout, Bundle};
pub use error::{NnError, Result};
pub use gradcheck::{grad_check, GradCheckReport};
pub use ops::{softmax_rows, BiLstmLayer, GruWeights, LstmWeights, SoftmaxXent};
pub use params::{Param, ParamId, ParameterSet};
pub use rng::{seeded, NnRng};
pub use tape::{Mode, Tape, Var};
pub use tensor::Tensor;
