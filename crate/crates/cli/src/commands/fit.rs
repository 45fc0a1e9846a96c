//! `fit`: sample every trajectory posterior and persist draws plus a report.

use std::path::Path;

use anyhow::{Context, Result};
use biphasic::likelihood::{PosteriorTarget, Trajectory};
use biphasic::sampler::{run_fit, FitResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{draws_file_name, fmt, TrajectoryFile};
use crate::config::{stream_base, RunConfig};
use crate::io;

/// One trajectory's entry in `fit_report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReportEntry {
    pub id: String,
    pub converged: bool,
    pub iterations_used: u64,
    pub thin: u64,
    pub acceptance_rates: Vec<f64>,
    pub solver_failures: u64,
    pub chol_rebuilds: u64,
    pub params: Vec<biphasic::diagnostics::ParamInput>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(rename = "_meta")]
    pub meta: serde_json::Value,
    pub trajectories: Vec<FitReportEntry>,
}

pub struct FitSummary {
    pub fitted: usize,
    pub converged: usize,
}

pub fn run(config: &RunConfig, trajectories_path: &Path, out_dir: &Path) -> Result<FitSummary> {
    let file = TrajectoryFile::read(trajectories_path)?;
    anyhow::ensure!(
        file.model == config.model,
        "trajectories were segmented for model {}, config requests model {}",
        file.model,
        config.model
    );
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let results: Vec<(String, Result<(FitResult, String)>)> = file
        .trajectories
        .par_iter()
        .map(|traj| {
            let outcome = fit_one(config, traj);
            (traj.id.clone(), outcome)
        })
        .collect();

    let mut entries = Vec::new();
    for (id, outcome) in results {
        let (fit, csv) = outcome.with_context(|| format!("fitting trajectory {id}"))?;
        io::write_atomic(&out_dir.join(draws_file_name(&id)), csv.as_bytes())?;
        entries.push(FitReportEntry {
            id,
            converged: fit.converged(),
            iterations_used: fit.report.iterations_used,
            thin: fit.thin,
            acceptance_rates: fit.chains.iter().map(|c| c.acceptance_rate).collect(),
            solver_failures: fit.solver_failures,
            chol_rebuilds: fit.chains.iter().map(|c| c.chol_rebuilds).sum(),
            params: fit.report.params.clone(),
            failures: fit.report.failures.clone(),
        });
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let converged = entries.iter().filter(|e| e.converged).count();
    let fitted = entries.len();

    let report = FitReport { meta: io::json_meta(config), trajectories: entries };
    let text = serde_json::to_string_pretty(&report)?;
    io::write_atomic(&out_dir.join("fit_report.json"), text.as_bytes())?;
    Ok(FitSummary { fitted, converged })
}

fn fit_one(config: &RunConfig, traj: &Trajectory) -> Result<(FitResult, String)> {
    let prior = config.prior(traj.duration())?;
    let target = PosteriorTarget::new(traj, prior, config.solver())?;
    let fit = run_fit(&target, &config.fit_config(stream_base(&traj.id)))?;
    let csv = draws_csv(config, &fit);
    Ok((fit, csv))
}

/// Post-burn-in draws as CSV: `chain,iter,<params...>,log_post`.
fn draws_csv(config: &RunConfig, fit: &FitResult) -> String {
    let mut out = io::csv_header_comment(config);
    out.push_str("chain,iter,");
    out.push_str(&fit.param_names.join(","));
    out.push_str(",log_post\n");
    for (c, chain) in fit.chains.iter().enumerate() {
        for (k, draw) in chain.theta_draws[fit.burn_in..].iter().enumerate() {
            let iter = (fit.burn_in + k + 1) as u64 * chain.thin;
            out.push_str(&format!("{c},{iter}"));
            for v in draw {
                out.push(',');
                out.push_str(&fmt(*v));
            }
            out.push(',');
            out.push_str(&fmt(chain.log_post_trace[fit.burn_in + k]));
            out.push('\n');
        }
    }
    out
}
