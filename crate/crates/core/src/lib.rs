//! Spreading speeds and pulsating traveling waves of spatially periodic
//! monostable equations with nonlocal dispersal,
//!
//! `u_t = (K u)(x) - u(x) + u(x) f(x, u(x))`, `(K u)(x) = int k(y - x) u(y) dy`,
//!
//! in one space dimension.

// NaN-rejecting guards are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod habitat;
pub mod spectral;
pub mod speed;
pub mod waves;

pub use error::{Error, Result};
