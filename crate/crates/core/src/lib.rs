//! Flatness-based null-control synthesis for one-dimensional parabolic equations.

pub mod bump;
pub mod canonical;
pub mod error;
pub mod extensions;
pub mod fit;
pub mod flat;
pub mod genfun;
pub mod ode;
pub mod spectral;
pub mod synthesis;

pub use error::{CoreError, Result};
