//! Structure-preserving conforming finite elements for the non-isothermal
//! Allen-Cahn-Navier-Stokes system in two dimensions.
//!
//! The unknowns are the phase field `phi`, the chemical potential `mu`, the
//! temperature `theta` (all continuous P1), the velocity `u` (continuous P2)
//! and a mean-free P1 pressure `p`. The temperature equation is discretised
//! through the entropy balance, which makes the discrete entropy production
//! identity exact and the total energy dissipate only through a nonpositive
//! numerical term.

#[cfg(not(any(feature = "umfpack", feature = "faer")))]
compile_error!("enable a sparse LU backend: feature `umfpack` or `faer`");

pub mod assembly;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod physics;
pub mod quadrature;
pub mod solver;
pub mod spaces;
#[cfg(feature = "umfpack")]
mod umfpack;

pub use error::{Error, Result};
