use thiserror::Error;

use crate::cipher::SymbolId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("character {0:?} is not in the alphabet")]
    UnknownChar(char),
    #[error("symbol id {0} is out of range")]
    InvalidId(u32),
    #[error("padding symbol at position {0} of an unpadded sequence")]
    UnexpectedPad(usize),
    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("expected a {expected} sequence, got {got}")]
    WrongRole { expected: &'static str, got: &'static str },
    #[error("invalid cipher key: {0}")]
    InvalidKey(String),
    #[error("corpus is empty after cleaning")]
    EmptyCorpus,
    #[error("sequence of length {len} exceeds the context length {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("head dimension {0} must be even")]
    OddHeadDim(usize),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("training diverged at step {0}: loss is not finite")]
    Diverged(u64),
    #[error("layer {layer} is outside 1..={max}")]
    LayerOutOfRange { layer: usize, max: usize },
    #[error("token {token} cannot be embedded (vocabulary size {vocab})")]
    TokenOutOfRange { token: SymbolId, vocab: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("this operation needs a bijective-head model")]
    NotBijective,
    #[error("train-mode bijective decoding needs a random source")]
    MissingRng,
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}

impl Error {
    /// True for errors caused by bad user configuration rather than runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::OddHeadDim(_)
                | Error::NonPositiveTemperature(_)
                | Error::TomlDe(_)
                | Error::InvalidArgument(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
