//! Numerical laboratory for spreading speeds of heterogeneous Fisher-KPP fronts.
//!
//! Three independent routes to the speed `w*` are provided: the tilted
//! principal eigenvalue `k_p` ([`operators`]), the Lyapunov exponent of the
//! linearized problem ([`freidlin`]) and direct simulation ([`pde`]).
//! [`variational`] evaluates the drift formula for `k_p`, and [`speedlab`]
//! runs the comparison and monotonicity suites.

pub mod error;
pub mod estimate;
pub mod freidlin;
pub mod linalg;
pub mod medium;
pub mod operators;
pub mod optimize;
pub mod pde;
pub mod registry;
pub mod speedlab;
pub mod variational;

pub use error::{KppError, Result};
pub use estimate::{Method, Provenance, SpeedEstimate};
