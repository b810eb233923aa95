use thiserror::Error;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
