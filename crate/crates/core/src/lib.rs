//! Calibration of single- and two-group biphasic Richards' growth models
//! to noisy percent-cover time series.
//!
//! The crate provides:
//!
//! - [`growth`] — the growth dynamics: a Richards (generalised logistic)
//!   model with a change point after which a damped early-recovery rate
//!   reverts to the full rate. Closed-form solutions for one group,
//!   adaptive Runge-Kutta-Fehlberg integration for coupled groups.
//! - [`likelihood`] — Gaussian observation model, uniform priors, and the
//!   unnormalised log-posterior over an unconstrained sampling space.
//! - [`sampler`] — robust adaptive random-walk Metropolis chains with
//!   multi-chain orchestration, round-based convergence checking, and
//!   deterministic seeding.
//! - [`diagnostics`] — split-chain potential scale reduction (with an
//!   F-based upper confidence bound), pooled effective sample size, and
//!   the convergence gate.
//! - [`predictive`] — posterior predictive simulation, credible bands,
//!   observed quantiles, smallest containing credible intervals, and the
//!   corpus-level coverage curve.
//! - [`data`] — survey ingestion, site aggregation, disturbance detection,
//!   trajectory segmentation, carrying-capacity estimation, and synthetic
//!   data generation.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod growth;
pub mod likelihood;
pub mod predictive;
pub mod sampler;

pub use error::{Error, Result};
