//! Permutation-entropy model sufficiency test for point forecasts.
//!
//! The crate is organised bottom-up:
//!
//! - [`ordinal`] encodes segments into ordinal patterns and tabulates their
//!   distribution over mixed (lag-block, delayed target) segments.
//! - [`dependence`] builds surrogate ensembles and the standardized K
//!   statistic on top of those distributions.
//! - [`inference`] calibrates critical values (independence threshold and
//!   moving-block bootstrap threshold for the K difference).
//! - [`sufftest`] turns statistics and thresholds into an
//!   Accept / Reject / Inconclusive verdict.
//! - [`dgp`], [`models`], [`bds`] and [`rvpipe`] provide the simulation
//!   designs, forecasters, the BDS comparator and the realized-volatility
//!   data path.

pub mod bds;
pub mod dependence;
pub mod dgp;
pub mod error;
pub mod inference;
pub mod models;
pub mod ordinal;
pub mod rng;
pub mod rvpipe;
pub mod stats;
pub mod sufftest;

pub use error::{Error, Result};
