//! Minimal dense-tensor engine for the codec.
//!
//! Every value is a 4-D `N×C×H×W` array of `f64` in row-major order. Graphs are
//! recorded on a [`Tape`] and differentiated in reverse with [`Tape::backward`].
//! The layer set is deliberately small: exactly what the analysis, synthesis,
//! context and discriminator networks need.

mod adam;
mod conv;
mod error;
mod gemm;
mod params;
pub mod special;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv2d, conv_output_dim, type_a_mask};
pub use error::{Result, TensorError};
pub use params::{GradStore, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Shape, Tensor};
