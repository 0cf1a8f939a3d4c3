//! Ritz solver for axisymmetric finite deformations of clamped hyperelastic
//! membranes under hydrostatic load.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod basis;
pub mod cli;
pub mod error;
pub mod kinematics;
pub mod material;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
