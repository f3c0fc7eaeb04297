use gmc_core::CodecError;
use gmc_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("non-finite {term} at iteration {iteration}")]
    NonFinite { iteration: u64, term: &'static str },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint was written for a different {what} (expected {expected}, found {found})")]
    CheckpointMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
