//! Martingale posteriors by predictive resampling with Gaussian-copula
//! updates.
//!
//! Start from a tabulated predictive distribution at a covariate value,
//! roll it forward with [`engine::run_posterior`], and read credible
//! intervals off the resulting [`engine::PosteriorResult`].

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod grid;
pub mod harness;
pub mod normal;
pub mod rng;
pub mod schedule;
pub mod simgen;
pub mod sources;
pub mod tuner;

pub use error::{Error, Result};
pub use grid::{FunctionalSpec, Functionals, GridDistribution};
pub use normal::CopulaBandwidth;
pub use schedule::ScheduleSpec;
