//! Compute-and-forward downlink building blocks: prime-field arithmetic, scalar
//! nested lattices, effective noise, integer-coefficient search, achievable
//! rates, end-to-end symbol chains, user scheduling and a Monte Carlo harness.

pub mod channel;
pub mod effective_noise;
pub mod error;
pub mod experiments;
pub mod integer_search;
mod parallel;
pub mod rates;
pub mod scalar_lattice;
pub mod schemes;
pub mod scheduling;
pub mod zp_field;

pub use error::{Error, Result};
