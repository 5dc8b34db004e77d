//! Finite-difference pricing engine for a three-factor local-stochastic-volatility
//! model with a stochastic short rate and correlated Meixner jumps in all drivers.
//!
//! The backward PIDE is solved by operator splitting: an advection-diffusion step
//! (Hundsdorfer-Verwer family with implicit mixed-derivative solves), one-dimensional
//! Meixner jump steps per driver, and a three-dimensional common-jump step built from
//! a truncated product of banded factors.

pub mod cli;
pub mod diffusion;
pub mod error;
pub mod grid;
pub mod jumps;
pub mod model;
pub mod operators;
pub mod oracles;
pub mod pricer;

pub use error::PricerError;
pub use model::ModelSpec;
