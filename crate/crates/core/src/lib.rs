//! Optimal investment in a defaultable asset under exponential utility.
//!
//! The certainty equivalent `G` solves a semilinear parabolic equation whose
//! nonlinearity is driven by the Lambert-W function. From `G` the crate derives
//! the optimal policy, defaultable-bond indifference prices and the dynamic
//! default-insurance rate, and checks them against a Monte Carlo oracle.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod error;
pub mod hjb;
pub mod lambertw;
pub mod model;
pub mod montecarlo;
pub mod pricing;
pub mod stats;

pub use error::{Error, Result};
pub use hjb::{GridSpec, Surface, SurfaceMode, SolverOptions};
pub use model::{ClaimSpec, Domain1D, ModelSpec, Preferences};
