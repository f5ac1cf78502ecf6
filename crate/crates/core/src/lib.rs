//! Incompressible ideal and slightly viscous flow in a moving material disk,
//! solved on the fixed reference disk through an area-preserving pullback.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod grid;
pub mod harness;
pub mod homogenize;
pub mod motion;
pub mod solver;
pub mod special;

pub use error::{FlowError, Result};
