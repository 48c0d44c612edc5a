//! Multilevel best linear unbiased estimators for multi-output models.
//!
//! The crate picks which model groups to sample and how often by solving a
//! semidefinite program, runs the resulting estimator against user models,
//! and compares it with multilevel and multifidelity Monte Carlo baselines.

pub mod baselines;
pub mod blue;
pub mod covariance;
pub mod error;
pub mod harness;
mod linalg;
pub mod models;
pub mod mosap;
pub mod sdp;

pub use error::{Error, Result};
