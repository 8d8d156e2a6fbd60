//! Deterministic wildfire and power-grid co-simulation.
//!
//! The engine couples a semi-empirical cellular fire model with a DC power-flow
//! model of a combined transmission and distribution network. Each timestep runs
//! operational mitigation, grid-caused ignitions, fire spread, fire damage to
//! exposed assets, and cascading overload tripping, then repairs and restores
//! service once the fire is contained.

// `!(x > 0.0)` is used on purpose so NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exposure;
pub mod fire;
pub mod fixtures;
pub mod landscape;
pub mod mitigation;
pub mod network;
pub mod power;
pub mod restoration;
pub mod rng;
pub mod scenario;
pub mod state;

pub use error::{Error, Result};
