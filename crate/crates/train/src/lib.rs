//! Two-stage training for the gmc codec: rate-distortion fitting of the
//! encoder, decoder and context model, then adversarial fine-tuning of a copy
//! of the decoder.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod features;
pub mod losses;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use config::{Dataset, TrainConfig};
pub use data::{load_dataset, sample_patches, synthetic_textures, PatchSampler};
pub use error::{Result, TrainError};
pub use features::{FeatureExtractor, RandomConvFeatures};
pub use losses::{feature_loss, loss_stage1, loss_stage2, lsgan_losses, mse_loss, Stage2Weights};
pub use trainer::{verify_frozen, LogRow, Stage1Trainer, Stage2Trainer};
