//! Numerical laboratory for Pucci-type two-phase free-boundary problems.
//!
//! The crate solves the regularised scalar problem `G_ε(u) = 0` and the
//! two-species segregation system on a uniform grid over the unit square, and
//! measures the quantities the regularity theory predicts: Lipschitz bounds,
//! monotonicity of the ACF functional, two-plane blow-ups with equal slopes,
//! interface flatness and cone monotonicity.

pub mod error;
pub mod grid;
pub mod io;
pub mod operators;
pub mod solver;
pub mod barriers;
pub mod monotonicity;
pub mod freeboundary;
pub mod fixtures;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{GridField, GridSpec, Point, VectorField};
