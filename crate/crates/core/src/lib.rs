//! Online estimation of medians, quantiles, CDFs and means when every sample
//! is seen only through one threshold comparison `1(x <= q)`.
//!
//! [`estimators`] holds the algorithms, [`adversaries`] the sample producers,
//! and [`arena`] plays them against each other and aggregates the results.

pub mod adversaries;
pub mod arena;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod model;
pub mod registry;
pub mod seed;

pub use error::{Error, Result};
