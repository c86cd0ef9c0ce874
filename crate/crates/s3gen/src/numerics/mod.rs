//! Self-contained numeric kernel: dense f64 tensors, a counter-based
//! deterministic RNG, named parameter stores with plain-text
//! checkpoints, and finite-difference gradient verification.
//!
//! Everything downstream (encoder, pruner, decoder, trainer) builds on
//! these four pieces; none of them depend on platform state, so any
//! fixed seed reproduces bit-identical results across machines.

pub mod gradcheck;
pub mod params;
pub mod rng;
pub mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_sampled, GradCheckReport};
pub use params::ParamStore;
pub use rng::Rng;
pub use tensor::{
    sigmoid, sigmoid_scalar, softmax_backward_slice, softmax_slice, softmax_stable, tanh_scalar,
    NumericsError, Tensor,
};
