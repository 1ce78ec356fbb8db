//! Interference alignment for the K-user interference channel with
//! receiver cooperation of order `M` (`K = M + 2`).
//!
//! The crate builds symbol-extended channels, runs successive interference
//! alignment (SIA) at every cooperative decoder, constructs the transmit
//! precoding bases, and verifies the alignment and full-rank conditions
//! exactly over a prime field or approximately over floats. A link-level
//! simulator estimates the achieved degrees of freedom from the slope of the
//! sum rate.

pub mod channel;
pub mod cli;
pub mod error;
pub mod linksim;
pub mod matrix;
pub mod params;
pub mod precoding;
pub mod ring;
pub mod sia;
pub mod verifier;

pub use error::{Error, Result};
