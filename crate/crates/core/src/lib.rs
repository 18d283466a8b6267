//! Numerical laboratory for inverse problems of quasilinear parabolic equations from
//! boundary Dirichlet-to-Neumann data.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod density;
pub mod dtn;
pub mod error;
pub mod geometry;
pub mod go;
pub mod laws;
pub mod linearize;
pub mod pde;
pub mod recovery;

pub use error::{Error, Result};
