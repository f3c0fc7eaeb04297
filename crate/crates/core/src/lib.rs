//! Learned image codec: analysis/synthesis networks, a Gaussian-mixture
//! context entropy model with a bit-exact range coder, and decoder interpolation.

pub mod codec;
pub mod config;
pub mod entropy;
pub mod error;
pub mod image;
pub mod interp;
pub mod io;
pub mod model;
pub mod weights;

pub use codec::{compress_image, decompress_image, Compressed};
pub use config::ModelConfig;
pub use error::{CodecError, CoderError, Result};
pub use interp::{alpha_sweep, interpolate_images, interpolate_networks, psnr, InterpMode, SweepReport};
pub use model::{LatentCode, Model, Network, QuantizedLatents};
