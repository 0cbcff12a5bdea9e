//! Friction-aware off-road navigation: Stribeck friction, four-wheel rigid-body
//! dynamics, friction identification from drive logs, a 2.5D terrain map and
//! physics-costed path and speed planning.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod friction;
pub mod harness;
pub mod ident;
pub mod map;
pub mod planner;
pub mod speed;
pub mod vehicle;

pub use error::{Error, Result};
