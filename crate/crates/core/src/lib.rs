//! Approximation of mixed Hölder functions on `[0, 1]^d` from uniformly
//! random samples.
//!
//! Points are mapped through a sparse tensor-Haar embedding
//! ([`embedding::TripleIndex`]) whose coordinates are mutually orthogonal
//! under the uniform measure, and a linear functional on the embedding is
//! fitted by randomized Kaczmarz iteration ([`kaczmarz::fit`]). The crate also
//! carries the deterministic sparse-grid (Smolyak) approximation the method
//! is built on, fractional Brownian motion test functions, and an experiment
//! harness that measures relative L2, max, and integral errors.

pub mod dyadic;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod kaczmarz;
pub mod sampling;
pub mod smolyak;
pub mod stats;
pub mod testfn;

pub use error::{Error, Result};
