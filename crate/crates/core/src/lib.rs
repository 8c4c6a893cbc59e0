//! Global Lyapunov-Schmidt ("flat map") solver for `-Δu - f(x,u) = g` with
//! homogeneous Dirichlet data on `[0,1] x [0,2]`, discretized with P1 elements.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod explorer;
pub mod expr;
pub mod field;
pub mod linalg;
pub mod mesh;
pub mod nonlinearity;
pub mod solver;
pub mod spectral;

pub use error::{FlatError, Result};
pub use field::{DualField, NodalField};
