//! Directed polymers in finite-range random environments.
//!
//! Exact partition functions by dynamic programming, exact environment
//! averages along fixed walk paths, renormalization constants from finite
//! enumerations and transfer matrices, and continuum targets for moment
//! checks.

// `!(x > 0.0)` style guards are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constants;
pub mod cumulants;
pub mod env_field;
pub mod error;
pub mod exec;
pub mod functionals;
pub mod harness;
pub mod polymer;
pub mod rng;
pub mod rows;
pub mod she_oracle;
pub mod stats;
pub mod transfer;
pub mod walk;
pub mod weights;

pub use env_field::{EnvironmentSpec, InnovationLaw, Region};
pub use error::{Error, Result};
pub use walk::WalkKernel;
