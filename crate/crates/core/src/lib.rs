//! Nonlinear Petrov–Galerkin solvers with numerical certification of mapped
//! coercivity hypotheses.
//!
//! The crate is organized bottom-up:
//!
//! * [`fnspace`]: P1/P2 finite element spaces, `W^{1,p}` norms and the duality map.
//! * [`operator`]: operators as forms, test maps and the discrete residual.
//! * [`solver`]: damped Newton, continuation and ball multistart.
//! * [`certify`]: coercivity probes, sphere surplus, boundedness, inf-sup and
//!   monotonicity sampling.
//! * [`problems`]: semilinear, Kirchhoff, mixed Poisson and Navier–Stokes families.

pub mod certify;
pub mod error;
pub mod fnspace;
pub mod linalg;
pub mod operator;
pub mod problems;
pub mod solver;

pub use error::{Error, Result};
