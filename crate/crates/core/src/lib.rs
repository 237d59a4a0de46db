//! Flow matching corrected posterior estimation.
//!
//! A posterior `p̂(θ|x)` trained on cheap simulations is corrected for
//! simulator misspecification with two conditional flow-matching vector
//! fields fitted jointly on a small calibration set of real `(θ, y)` pairs:
//! a data-space field that transports noise around `y` to simulator-like
//! observations, and a parameter-space field that transports the resulting
//! simulation-informed proposal to the calibrated posterior.

pub mod baseline;
pub mod error;
pub mod flow;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tasks;
pub mod transform;

pub use error::{Error, Result};
pub use rng::RandomSource;
