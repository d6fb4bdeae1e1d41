//! Reverse-mode autodiff, MLPs and the Adam optimizer.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{grad_wrt_input, Activation, BoundMlp, Layer, LayerSpec, MlpNetwork, Mode};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
