//! S3 headline generation toolkit.
//!
//! Builds a unified semantic discourse graph for each document from a
//! discourse tree plus per-clause semantic graphs, encodes it with a
//! multi-head graph attention network, prunes it with a learned
//! stochastic policy, and decodes a headline by fusing graph and token
//! representations. All numerics are hand-written f64 with
//! finite-difference verification; every run is deterministic given a
//! seed.

pub mod amr;
pub mod checks;
pub mod cli;
pub mod decoder;
pub mod encoder;
pub mod metrics;
pub mod model;
pub mod trainer;
pub mod pruner;
pub mod numerics;
pub mod rst;
pub mod s3;
pub mod synth;
pub mod vocab;

pub use numerics::{ParamStore, Rng, Tensor};
