//! Entropy coding of quantized latents under the context model's mixtures.

pub mod container;
pub mod distribution;
pub mod gmm;
pub mod latent_codec;
pub mod range_coder;
pub mod rate;

pub use container::{pack_container, unpack_container, Bitstream, Header};
pub use distribution::{SymbolDistribution, MAX_ALPHABET, TOTAL};
pub use gmm::{gmm_integer_pmf, LIKELIHOOD_FLOOR};
pub use latent_codec::{compress_latents, decode_latents, decompress_latents, encode_latents, EncodedLatents};
pub use range_coder::{RangeDecoder, RangeEncoder};
pub use rate::{estimate_bits, rate_bits_var, rate_estimate, RateReport};
