//! Steady states of a field-road reaction-diffusion model.
//!
//! A two-dimensional field `(-ℓ, ℓ) x (0, L)` exchanges individuals with a
//! road along its bottom edge (and optionally a second road along the top).
//! Solutions are computed by monotone iteration between a subsolution and a
//! supersolution, with an outer fixed-point loop over the road density.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupled;
pub mod eigen;
pub mod error;
pub mod exhaust;
pub mod field;
pub mod grid;
pub mod linsolve;
pub mod model;
pub mod monotone;
pub mod oracle;
pub mod road;
pub mod summary;
pub mod tworoad;

pub use error::{Error, Result};
pub use field::{FieldProblem, FieldSolver, RoadState, TopExchange};
pub use grid::{FieldFunction, FieldGrid, RoadFunction, RoadMode, Side};
pub use model::{ModelParams, Reaction, ReactionLaw, ValidationReport};
