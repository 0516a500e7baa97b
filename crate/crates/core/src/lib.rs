//! Numerical toolkit for blow-up of gradient-type parabolic systems
//! `u_t - Delta u = F(u)` with `F = grad G` and a positively homogeneous
//! coupled potential `G`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bootstrap;
pub mod energy;
pub mod error;
pub mod grid;
pub mod nonlinearity;
pub mod par;
pub mod physical;
pub mod scenarios;
pub mod selfsimilar;
pub mod subsolution;

pub use error::{Error, Result};
