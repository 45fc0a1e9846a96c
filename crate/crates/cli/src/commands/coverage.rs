//! `coverage`: pool per-observation smallest-CrI levels into the coverage
//! curve.
//!
//! The disturbance-visit observation (`j = 0`) is excluded by default: the
//! model conditions on it as the known initial state, so its residual is
//! zero by construction and it carries no predictive information. Pass
//! `--include-initial` to keep it.

use std::path::Path;

use anyhow::{bail, Context, Result};
use biphasic::predictive::coverage_curve;

use super::fmt;
use crate::config::RunConfig;
use crate::io;

pub struct CoverageSummary {
    pub observations: usize,
    pub skipped_initial: usize,
}

pub fn run(config: &RunConfig, quantiles_path: &Path, out_path: &Path) -> Result<CoverageSummary> {
    let file = std::fs::File::open(quantiles_path)
        .with_context(|| format!("opening {}", quantiles_path.display()))?;
    let mut reader = io::csv_reader(file);
    let headers = reader.headers()?.clone();
    let j_col = headers
        .iter()
        .position(|h| h == "j")
        .ok_or_else(|| anyhow::anyhow!("quantiles file lacks a `j` column"))?;
    let beta_col = headers
        .iter()
        .position(|h| h == "beta")
        .ok_or_else(|| anyhow::anyhow!("quantiles file lacks a `beta` column"))?;

    let mut betas = Vec::new();
    let mut skipped_initial = 0;
    for row in reader.records() {
        let row = row?;
        let j: usize = row[j_col].parse()?;
        if j == 0 && !config.include_initial {
            skipped_initial += 1;
            continue;
        }
        betas.push(row[beta_col].parse::<f64>()?);
    }
    if betas.is_empty() {
        bail!("no usable observations in {}", quantiles_path.display());
    }
    let curve = coverage_curve(&betas)?;

    let mut csv = io::csv_header_comment(config);
    csv.push_str("beta,p_hat,s_hat\n");
    for (i, &b) in curve.beta_grid.iter().enumerate() {
        csv.push_str(&format!("{b},{},{}\n", fmt(curve.p_hat[i]), fmt(curve.s_hat[i])));
    }
    io::write_atomic(out_path, csv.as_bytes())?;
    Ok(CoverageSummary { observations: betas.len(), skipped_initial })
}
