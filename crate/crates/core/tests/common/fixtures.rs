#![allow(dead_code)]

use gmc_core::{Model, ModelConfig, Network, QuantizedLatents};
use gmc_tensor::{ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        base_channels: 4,
        latent_channels: 2,
        downsample_factor: 4,
        mixtures: 2,
        residual_blocks_per_stage: 1,
        ..ModelConfig::default()
    }
}

pub fn tiny_model() -> Model {
    Model::new(tiny_config()).unwrap()
}

/// Context parameters with every tensor scaled by `scale`, spreading the
/// predicted means and deviations over a useful range.
pub fn context_params(model: &Model, seed: u64, scale: f64) -> ParamStore {
    let mut p = model.init(Network::Context, seed).unwrap();
    for (_, t) in p.iter_mut() {
        *t = t.map(|v| ((v * scale) as f32) as f64);
    }
    p
}

pub fn random_grid(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, spread: i32, margin: i32) -> QuantizedLatents {
    let symbols = (0..c * h * w).map(|_| rng.random_range(-spread..=spread)).collect();
    QuantizedLatents::new(c, h, w, symbols, margin).unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn texture(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fx, fy, ph): (f64, f64, f64) = (rng.random_range(0.1..0.6), rng.random_range(0.1..0.6), rng.random_range(0.0..6.0));
    Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
        0.5 + 0.35 * ((x as f64 * fx + y as f64 * fy + ph + c as f64).sin() * (y as f64 * fx * 0.5).cos())
    })
}
