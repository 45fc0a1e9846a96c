//! Batch command-line pipeline for biphasic recovery calibration.
//!
//! Commands are file-to-file transformations: `simulate` fabricates a
//! transect survey, `segment` turns a survey into recovery trajectories,
//! `fit` samples each trajectory posterior, `diagnose` recomputes the
//! convergence table, `predict` writes credible bands and observed
//! quantiles, `coverage` pools the quantiles into the calibration curve,
//! and `plot` renders static SVG figures. Every command is idempotent for a
//! fixed config and seed, writes outputs atomically, and stamps them with
//! the config hash.

pub mod commands;
pub mod config;
pub mod io;
pub mod plot;
