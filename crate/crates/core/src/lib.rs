//! Orthogonal-subscale stabilized finite elements for the Stokes eigenvalue
//! problem in two-field (velocity, pressure) and three-field (velocity,
//! pressure, deviatoric stress) form, with equal-order continuous P1/P2
//! interpolation on triangles.

pub mod eigsolve;
pub mod error;
pub mod export;
pub mod fe;
pub mod mesh;
pub mod sparse;
pub mod stokes;
pub mod study;
pub mod verify;

pub use error::{Error, Result};
