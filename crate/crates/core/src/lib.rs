//! Pathwise functional calculus on sampled price paths, delta-hedging error
//! analysis, and characteristic-function expansions for local Levy models.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod functional;
pub mod hedging;
pub mod levy;
pub mod mc;
pub mod path;
pub mod pricing;
pub mod quad;

pub use error::{Error, Result};
