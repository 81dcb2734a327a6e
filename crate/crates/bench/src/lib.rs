//! Benchmarks, metrics and the command-line driver for centroid-guided
//! ensemble CEM.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod metrics;
pub mod objectives;
pub mod runner;
pub mod sampler_check;
pub mod spec;
pub mod svg;

pub use error::{BenchError, Result};
