use flatness_model::ModelError;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CoreError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("problem is not admissible: failed checks {0:?}")]
    NotAdmissible(Vec<String>),

    #[error("corrector solve failed: {0}")]
    SolveFailure(String),

    #[error("ODE integration failed at {at} (lambda = {lambda})")]
    IntegrationFailure { lambda: f64, at: f64 },

    #[error("no eigenvalue bracket for n = {n} within magnitude {magnitude:e}")]
    BracketFailure { n: usize, magnitude: f64 },

    #[error("derivative order {order} requested at t = {t}, too close to a flat-region endpoint")]
    OrderTooHigh { t: f64, order: usize },

    #[error("fit is degenerate: {0}")]
    FitDegenerate(String),

    #[error("outside the supported domain: {0}")]
    DomainError(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CoreError>,
    },
}

impl CoreError {
    pub fn at_stage(self, stage: &'static str) -> Self {
        match self {
            e @ CoreError::Stage { .. } => e,
            e => CoreError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Pipeline stage for a wrapped error.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            CoreError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
