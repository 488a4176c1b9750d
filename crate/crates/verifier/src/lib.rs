//! Independent forward simulation of boundary- and internally-controlled
//! parabolic problems, used to check synthesized controls.

pub mod check;
pub mod error;
pub mod grid;
pub mod sim;

pub use check::{cross_check, Deviation};
pub use error::{Result, SimError};
pub use grid::{Scheme, SimGrid, DEFAULT_CELLS, DEFAULT_STEPS};
pub use sim::{simulate_forward, Control, Discretization, SimResult};
