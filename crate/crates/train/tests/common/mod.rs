#![allow(dead_code)]

pub mod gradcheck;

use gmc_core::{Model, ModelConfig};
use gmc_train::{Dataset, TrainConfig};

/// Smallest config that still exercises every layer kind, attention included.
pub fn tiny_model() -> Model {
    Model::new(ModelConfig {
        base_channels: 4,
        latent_channels: 2,
        downsample_factor: 4,
        mixtures: 2,
        residual_blocks_per_stage: 1,
        ..ModelConfig::default()
    })
    .unwrap()
}

pub fn tiny_train(stage: u8, iterations: u64) -> TrainConfig {
    TrainConfig {
        stage,
        iterations,
        patch_size: 32,
        batch_size: 2,
        seed: 11,
        dataset: Dataset::Synthetic { count: 3, size: 40 },
        ..TrainConfig::default()
    }
}
