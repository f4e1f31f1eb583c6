// Validation guards are written as `!(x > y)` on purpose: the negation
// rejects NaN, which `x <= y` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Numerical laboratory for two radial quasilinear problems on the unit
//! ball and the change of unknown connecting them:
//!
//!   -Delta_p u = beta(u) |u'|^p + lambda f   (gradient source)
//!   -Delta_p v = lambda f (1 + g(v))^(p-1)   (order-zero source)
//!
//! with first-eigenvalue thresholds, minimal-solution branches and the
//! extremal parameter, explicit singular families with a Dirac mass at the
//! origin, and end-to-end checks that the two problems transform into each
//! other.

pub mod branch;
pub mod catalog;
pub mod cli;
pub mod config;
pub mod eigen;
pub mod error;
pub mod interp;
pub mod nonlinearity;
pub mod quad;
pub mod radial;
pub mod singular;
pub mod transform;

pub use error::{Error, Result};
