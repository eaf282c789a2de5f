//! Moment-preserving initialization for random feed-forward networks.
//!
//! The crate computes the variance σ² at which the s-th moment of the
//! normalized output norm stays constant across layers, the Lyapunov
//! exponent governing almost-sure behaviour, and a Monte Carlo engine that
//! checks both against sampled networks.

pub mod error;
pub mod kernels;
pub mod lyapunov;
pub mod rng;
pub mod simulate;
pub mod specfn;
pub mod verify;

pub use error::{Error, Result};
