use thiserror::Error;

use crate::Shape;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("{op}: {msg}")]
    Config { op: &'static str, msg: String },

    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Shape, len: usize },

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Shape),

    #[error("gradient record was already consumed by a backward pass")]
    StaleRecord,

    #[error("variable #{0} does not belong to this tape")]
    UnknownVar(usize),

    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("parameter stores are not interpolation-compatible: {0}")]
    Incompatible(String),
}

impl TensorError {
    pub(crate) fn config(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Config {
            op,
            msg: msg.into(),
        }
    }
}
