//! Problem data for one-dimensional boundary control of parabolic equations
//!
//! ```text
//! (a u_x)_x + b u_x + c u - rho u_t = 0    on (0,1) x (0,T)
//! alpha0 u(0,t) + beta0 (a u_x)(0,t) = 0
//! alpha1 u(1,t) + beta1 (a u_x)(1,t) = h(t)
//! ```
//!
//! together with the coefficient representation (piecewise power law times a
//! continuous part), graded meshes and the singularity-aware quadrature that
//! the rest of the workspace builds on.

pub mod coeff;
pub mod error;
pub mod expr;
pub mod gauss;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod signal;

pub use coeff::{CoefficientFn, Segment, SegmentRecord, Smooth};
pub use error::ModelError;
pub use expr::Expr;
pub use mesh::{Cell, CellMap, Grading, Mesh, MeshFn, Side};
pub use problem::{validate, validate_with_tol, Check, ProblemSpec, RobinPair, ValidationReport};
pub use quadrature::{integrate_singular, DEFAULT_TOL};
pub use signal::{ControlSignal, DistributedControl, Regime, Trajectory};
