//! Stochastic modelling of the mean market correlation: preprocessing of
//! price panels, Langevin and generalised Langevin fits with Bayesian
//! ensemble sampling, forecasting diagnostics and rolling-window resilience
//! estimation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod error;
pub mod forecast;
pub mod gle;
pub mod market_data;
pub mod pipeline;
pub mod resilience;
pub mod sde_sim;

pub use error::{Error, Result};
