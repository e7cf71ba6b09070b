//! Predictive Bayesian inference by forward simulation.
//!
//! A predictive engine proposes the next observation given everything seen so
//! far. Running an engine forward from observed data and pushing the augmented
//! empirical measure through a functional yields one draw from the
//! predictive-Bayes posterior (PBP). This crate provides:
//!
//! * [`measures`]: samples, empirical CDFs and quantiles, mixture measures and
//!   1-D Wasserstein distances.
//! * [`engines`]: the recursive Gaussian engine with bias schedules, its
//!   total-variation probe, and natural-gradient Gaussian / Student-t
//!   regression engines with hybrid finalization.
//! * [`functionals`]: mean, variance and quantile functionals plus their
//!   asymptotic variance formulas.
//! * [`resampler`]: forward paths, PBP draws and credible intervals.
//! * [`diagnostics`]: posterior predictive checks of the engine (PPC-PE).
//! * [`experiments`]: the Monte Carlo harness for coverage, quantile and
//!   predictive-check studies.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. With `std`, outer Monte Carlo loops run on the rayon pool; results
//! are identical either way because every replicate owns its own RNG stream.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod diagnostics;
pub mod engines;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod measures;
pub mod resampler;
pub mod rng;
pub mod special;

mod linalg;
mod par;

pub use error::{Error, Result};
pub use linalg::Matrix;
