use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("expression error in '{expr}' at offset {pos}: {msg}")]
    Expr { expr: String, pos: usize, msg: String },

    #[error("integrand not integrable at x = {point}: endpoint exponent {exponent} <= -1")]
    NonIntegrable { point: f64, exponent: f64 },

    #[error("quadrature tolerance {tol:e} not met (last change {achieved:e} relative)")]
    ToleranceNotMet { achieved: f64, tol: f64 },

    #[error("invalid segment layout: {0}")]
    Segments(String),

    #[error("invalid problem: {0}")]
    Spec(String),
}
