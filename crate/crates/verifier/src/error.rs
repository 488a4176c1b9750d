use flatness_model::ModelError;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("singular system: {0}")]
    SingularMatrix(String),

    #[error("invalid grid: {0}")]
    Grid(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
