//! Simulation toolkit for topological quantum memories on the torus.
//!
//! The crate builds square and randomized stabilizer toric codes, simulates
//! incoherent anyon dynamics with a kinetic Monte Carlo engine coupled to
//! constant-rate or Ohmic thermal baths, decodes syndromes with an exact
//! minimum-weight perfect matching (blossom) decoder, and propagates coherent
//! single-anyon quantum walks by dense eigendecomposition. Analysis routines
//! extract error thresholds from curve crossings, memory lifetimes, bootstrap
//! confidence intervals and the CSS capacity bound.
//!
//! Ensemble sweeps (trajectories, error draws, disorder realizations) are
//! data parallel via `rayon` when the default `parallel` feature is enabled;
//! disabling it compiles a sequential fallback with identical results.

pub mod analysis;
pub mod decoder;
pub mod energy;
pub mod error;
pub mod kmc;
pub mod lattice;
pub mod parallel;
pub mod qwalk;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
