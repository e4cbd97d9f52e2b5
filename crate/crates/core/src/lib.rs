//! Simulation and statistical verification of nonstandard `(n log n)^{1/2}`
//! limit laws: intermittent interval maps, the Bunimovich stadium, and a
//! synthetic Gibbs-Markov chain with exactly known limit variance.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod gibbs_markov;
pub mod harness;
pub mod inducing;
pub mod numeric;
pub mod quadrature;
pub mod rng;
pub mod stadium;
pub mod stats;

pub use error::{Error, Result};
