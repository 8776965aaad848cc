//! burstlab: simulation and analysis toolkit that discriminates true
//! long-range memory (fractional Brownian motion, correlated increments)
//! from Markovian nonlinear-SDE dynamics (uncorrelated, non-stationary
//! increments) via the power-law exponent of burst and inter-burst duration
//! distributions.
//!
//! The discriminator: one-dimensional Markov processes have first-passage
//! duration PDFs decaying as T^(-3/2) at every threshold, while fBm decays
//! as T^(-(2-H)). The crate provides both generators, the threshold-passage
//! statistics, spectral power-law fits to extract H, and a configuration
//! driven pipeline that runs the whole chain and emits machine-readable
//! reports.

pub mod bessel;
pub mod error;
pub mod fbm;
pub mod io;
pub mod passage;
pub mod pipeline;
pub mod point_process;
pub mod rng;
pub mod sde;
pub mod series;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use series::{EventStream, PriceSeries, UniformSeries};
