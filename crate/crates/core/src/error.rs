use thiserror::Error;

/// Crate-wide error type. Variants are kept distinct where the contracts
/// require callers to tell failure modes apart (corpus version vs. truncation
/// vs. checksum, divergence vs. misuse).
#[derive(Debug, Error)]
pub enum MixpertError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("corpus version mismatch: file has v{found}, reader expects v{expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("checksum failure at record {index}")]
    Checksum { index: usize },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("training diverged in phase '{phase}' at step {step} (loss = {loss})")]
    Diverged { phase: String, step: usize, loss: f32 },

    #[error("pipeline stage '{stage}' failed: {message}")]
    Stage { stage: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MixpertError>;
