//! Monte Carlo laboratory for one-dimensional super-Brownian motion and its
//! local time: particle engines, estimators, exact-law oracles and the named
//! experiments built from them.

// negated float comparisons such as `!(x > 0.0)` also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clusters;
pub mod config;
pub mod csbp;
pub mod engine;
pub mod error;
pub mod exitmeasure;
pub mod experiments;
pub mod grid;
pub mod localtime;
pub mod manifest;
pub mod regularity;
pub mod rng;
pub mod stats;
pub mod table;
pub mod verdict;

pub use error::{Error, Result};
