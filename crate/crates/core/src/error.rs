use thiserror::Error;

/// Invalid or inconsistent configuration.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// A flow or buffer bound was broken. Always a simulator bug.
    #[error("constraint violation at step {step}: {message}")]
    ConstraintViolation { step: u64, message: String },
    #[error("neighbourhood of {size} nodes exceeds the {max}-slot observation")]
    Capacity { size: usize, max: usize },
    #[error("replay holds {have} experiences, batch needs {need}")]
    InsufficientData { have: usize, need: usize },
    #[error(transparent)]
    Model(#[from] ldtn_gnn::GnnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
