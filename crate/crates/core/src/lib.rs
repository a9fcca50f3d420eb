//! Simulation and numerical verification of supercritical Crump-Mode-Jagers
//! branching processes counted with random characteristics.
//!
//! The crate is organised bottom-up:
//!
//! * [`models`] holds the birth point processes and their intensity data.
//! * [`spectral`] solves the Malthusian equation and scans the critical strip.
//! * [`genealogy`] runs the event-driven population simulation and the
//!   martingale functionals read off a population.
//! * [`characteristics`] evaluates characteristics, their conditional
//!   projections and the centred characteristic `chi`.
//! * [`renewal`] does the renewal-theoretic numerics (mean process, key
//!   renewal limit, remainder check, variance constant).
//! * [`harness`] orchestrates Monte Carlo replica farms and the statistical
//!   tests.

pub mod characteristics;
pub mod config;
pub mod error;
pub mod genealogy;
pub mod harness;
pub mod models;
pub mod output;
pub mod quadrature;
pub mod renewal;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
