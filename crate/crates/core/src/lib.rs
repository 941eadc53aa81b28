//! Numerical laboratory for the geometry of oriented lines in R³.
//!
//! * [`linespace`]: the neutral Kähler space of oriented lines.
//! * [`surfgeom`]: parametric surfaces, curvatures and normal congruences.
//! * [`lagrangian`]: Lagrangian and complex-point checks, Maslov bookkeeping.
//! * [`toponogov`]: convex surface families, profile checks, umbilic-gap sweeps.
//! * [`discflow`]: discrete holomorphic discs with Lagrangian boundary.

// NaN must fall into the rejecting branch of every tolerance check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discflow;
pub mod error;
pub mod jet;
pub mod lagrangian;
pub mod linespace;
pub mod quadrature;
pub mod surfgeom;
pub mod toponogov;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
