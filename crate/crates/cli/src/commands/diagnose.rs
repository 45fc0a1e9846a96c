//! `diagnose`: recompute the convergence table from stored draws.

use std::path::Path;

use anyhow::{Context, Result};
use biphasic::diagnostics::{ess, gate, r_hat, GateThresholds, ParamInput};

use super::{fmt, list_draws_files, DrawsTable};
use crate::config::RunConfig;
use crate::io;

pub struct DiagnoseSummary {
    pub trajectories: usize,
    pub passed: usize,
}

/// Write `diagnostics.csv` with one row per (trajectory, parameter),
/// mirroring the printed convergence tables: the point estimate, its upper
/// 95% confidence bound, and the pooled effective sample size.
pub fn run(config: &RunConfig, draws_dir: &Path, out_path: &Path) -> Result<DiagnoseSummary> {
    let thresholds =
        GateThresholds { r_hat: config.rhat_threshold, ess: config.ess_threshold };
    let mut csv = io::csv_header_comment(config);
    csv.push_str("trajectory,parameter,r_hat,r_hat_upper95,ess,pass\n");

    let mut passed = 0;
    let files = list_draws_files(draws_dir)?;
    let total = files.len();
    for (id, path) in files {
        let table = DrawsTable::read(&path)
            .with_context(|| format!("reading draws for {id}"))?;
        let mut inputs = Vec::new();
        for (p, name) in table.param_names.iter().enumerate() {
            let columns: Vec<Vec<f64>> = table
                .chains
                .iter()
                .map(|chain| chain.iter().map(|row| row[p]).collect())
                .collect();
            let views: Vec<&[f64]> = columns.iter().map(|v| v.as_slice()).collect();
            let (point, upper) = r_hat(&views)
                .with_context(|| format!("potential scale reduction for {id}/{name}"))?;
            let e = ess(&views)
                .with_context(|| format!("effective sample size for {id}/{name}"))?;
            inputs.push(ParamInput {
                name: name.clone(),
                r_hat: point,
                r_hat_upper95: upper,
                ess: e,
            });
        }
        let report = gate(inputs, &thresholds, 0);
        if report.pass {
            passed += 1;
        }
        for p in &report.params {
            csv.push_str(&format!(
                "{id},{},{},{},{},{}\n",
                p.name,
                fmt(p.r_hat),
                fmt(p.r_hat_upper95),
                fmt(p.ess),
                report.pass
            ));
        }
    }
    io::write_atomic(out_path, csv.as_bytes())?;
    Ok(DiagnoseSummary { trajectories: total, passed })
}
