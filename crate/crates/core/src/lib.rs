//! Numerics for Lorenz-like attractors.
//!
//! The crate covers two dynamical systems and the statistics computed on
//! them:
//!
//! * [`ode`]: the classical three-parameter Lorenz system, its tangent
//!   dynamics and Poincaré-section crossings.
//! * [`model`]: the geometric Lorenz model, built as an explicit return map
//!   on the square cross-section together with its one-dimensional quotient,
//!   the roof (return-time) function and the suspension semiflow.
//! * [`ergodic`], [`dimension`] and [`statistics`]: Birkhoff averages,
//!   Lyapunov exponents, local dimensions, hitting and recurrence times,
//!   correlation decay, large deviations and escape rates.
//!
//! Everything here is `no_std` (with `alloc`). IO, configuration and
//! parallel drivers live in the companion `lorenzlab` crate. Monte Carlo
//! estimators are written as tallies over ranges of sample indices so the
//! caller can split them across workers and merge the results in index
//! order.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![cfg_attr(test, allow(clippy::excessive_precision, clippy::identity_op))]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("lorenzlab-core needs either the `std` or the `libm` feature for float math");

pub mod dimension;
pub mod ergodic;
mod error;
pub mod math;
pub mod model;
pub mod ode;
pub mod quad;
pub mod rng;
pub mod special;
pub mod statistics;

pub use error::{Error, Result};
