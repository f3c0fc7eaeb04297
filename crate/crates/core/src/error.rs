use gmc_tensor::TensorError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CodecError>;

/// Failures of the range coder proper.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoderError {
    #[error("payload ended before all symbols were decoded")]
    Truncated,

    #[error("{0} unread bytes after the last symbol")]
    TrailingBytes(usize),

    #[error("payload is inconsistent with the probability model")]
    Corrupt,

    #[error("symbol {symbol} outside alphabet [{min}, {max}]")]
    SymbolOutOfRange { symbol: i32, min: i32, max: i32 },

    #[error("alphabet of {0} symbols exceeds the 2^15 limit")]
    AlphabetTooLarge(usize),

    #[error("invalid distribution: {0}")]
    Domain(String),
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("config digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { expected: u16, found: u16 },

    #[error("truncated {what}")]
    Truncated { what: &'static str },

    #[error("corrupted shape for tensor `{name}`: expected {expected:?}, found {found:?}")]
    CorruptShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("unexpected tensor `{found}` (expected `{expected}`)")]
    UnexpectedTensor { expected: String, found: String },

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("{0} trailing bytes after {1}")]
    TrailingBytes(usize, &'static str),

    #[error("entropy coding failed at element {index}: {source}")]
    Coding {
        index: usize,
        #[source]
        source: CoderError,
    },

    #[error("decoder context diverged from the encoder at position {position}")]
    ContextDivergence { position: usize },

    #[error("decoded latents do not match the alphabet recorded in the header: {0}")]
    AlphabetMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
