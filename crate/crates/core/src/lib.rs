//! Ensemble cross-entropy optimisation guided by the Bregman centroid of the
//! workers' sampling distributions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cem;
pub mod centroid;
pub mod error;
pub mod expfam;
pub mod mpc;
pub mod rng;
pub mod trust_region;

pub use error::{Error, Result};
