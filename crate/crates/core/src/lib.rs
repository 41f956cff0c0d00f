//! Error accumulation in quantum memories whose error correction can only
//! touch a fraction `alpha` of the `n` physical qubits per batch.
//!
//! The crate has an exact oracle over the `n + 1` error counts, a
//! reproducible Monte Carlo engine, the mean-field recursion and its crossing
//! time, and closed-form overhead and threshold bounds.

pub mod bounds;
pub mod chain;
pub mod cli;
pub mod config;
pub mod error;
pub mod exact;
pub mod meanfield;
pub mod montecarlo;
pub mod output;
pub mod stats;
pub mod verify;

pub use chain::{ChainState, ModelParams, NoiseKind};
pub use error::{Error, Result};
