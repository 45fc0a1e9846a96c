//! `plot`: render bands, coverage curves, marginals, traces, and growth
//! curve families as SVG files.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use biphasic::predictive::{CoverageCurve, LevelBand};

use super::{list_draws_files, DrawsTable, TrajectoryFile};
use crate::config::RunConfig;
use crate::io;
use crate::plot as svg;

/// One SVG per (trajectory, group) from `bands.csv`, observations overlaid.
pub fn bands(
    config: &RunConfig,
    bands_path: &Path,
    trajectories_path: &Path,
    out_dir: &Path,
) -> Result<usize> {
    let file = TrajectoryFile::read(trajectories_path)?;
    let reader = std::fs::File::open(bands_path)
        .with_context(|| format!("opening {}", bands_path.display()))?;
    let mut csv_reader = io::csv_reader(reader);
    // (trajectory, group) -> level -> time -> (lo, hi)
    let mut table: BTreeMap<(String, String), BTreeMap<u8, BTreeMap<u64, (f64, f64)>>> =
        BTreeMap::new();
    for row in csv_reader.records() {
        let row = row?;
        let level: u8 = row[3].parse()?;
        let time: f64 = row[2].parse()?;
        table
            .entry((row[0].to_string(), row[1].to_string()))
            .or_default()
            .entry(level)
            .or_default()
            .insert(time.to_bits(), (row[4].parse()?, row[5].parse()?));
    }

    let header = io::svg_header_comment(config);
    let mut written = 0;
    for ((traj_id, group), levels) in table {
        let traj = file
            .trajectories
            .iter()
            .find(|t| t.id == traj_id)
            .ok_or_else(|| anyhow::anyhow!("bands reference unknown trajectory {traj_id}"))?;
        let g = traj
            .group_names
            .iter()
            .position(|n| *n == group)
            .ok_or_else(|| anyhow::anyhow!("unknown group {group} for {traj_id}"))?;
        let bands: Vec<LevelBand> = levels
            .into_iter()
            .map(|(level, by_time)| {
                let mut lo = Vec::new();
                let mut hi = Vec::new();
                for &t in &traj.times {
                    let (l, h) = by_time
                        .get(&t.to_bits())
                        .copied()
                        .ok_or_else(|| anyhow::anyhow!("missing band cell at t = {t}"))?;
                    lo.push(vec![l]);
                    hi.push(vec![h]);
                }
                Ok(LevelBand { level, lo, hi })
            })
            .collect::<Result<_>>()?;
        let obs: Vec<f64> = traj.obs.iter().map(|row| row[g]).collect();
        let svg_text = svg::bands_svg(
            &format!("{traj_id} ({group})"),
            &traj.times,
            0,
            &bands,
            &obs,
            &header,
        )?;
        io::write_atomic(
            &out_dir.join(format!("bands_{traj_id}_{group}.svg")),
            svg_text.as_bytes(),
        )?;
        written += 1;
    }
    Ok(written)
}

/// Coverage curve figure from `coverage.csv`.
pub fn coverage(config: &RunConfig, coverage_path: &Path, out_path: &Path) -> Result<()> {
    let reader = std::fs::File::open(coverage_path)
        .with_context(|| format!("opening {}", coverage_path.display()))?;
    let mut csv_reader = io::csv_reader(reader);
    let mut beta_grid = Vec::new();
    let mut p_hat = Vec::new();
    let mut s_hat = Vec::new();
    for row in csv_reader.records() {
        let row = row?;
        beta_grid.push(row[0].parse()?);
        p_hat.push(row[1].parse()?);
        s_hat.push(row[2].parse()?);
    }
    if beta_grid.is_empty() {
        bail!("{} contains no rows", coverage_path.display());
    }
    let n_obs = 0; // not stored in the CSV; unused by the figure
    let curve = CoverageCurve { beta_grid, p_hat, s_hat, n_obs };
    let svg_text = svg::coverage_svg(&curve, &io::svg_header_comment(config))?;
    io::write_atomic(out_path, svg_text.as_bytes())
}

/// Marginal posterior histograms, one SVG per (trajectory, parameter).
pub fn marginals(config: &RunConfig, draws_dir: &Path, out_dir: &Path) -> Result<usize> {
    let header = io::svg_header_comment(config);
    let mut written = 0;
    for (id, path) in list_draws_files(draws_dir)? {
        let table = DrawsTable::read(&path)?;
        let pooled = table.pooled();
        for (p, name) in table.param_names.iter().enumerate() {
            let draws: Vec<f64> = pooled.iter().map(|row| row[p]).collect();
            let svg_text = svg::histogram_svg(&format!("{name} ({id})"), &draws, 40, &header)?;
            io::write_atomic(
                &out_dir.join(format!("marginal_{id}_{name}.svg")),
                svg_text.as_bytes(),
            )?;
            written += 1;
        }
    }
    Ok(written)
}

/// Trace plots, one SVG per (trajectory, parameter) with all chains.
pub fn traces(config: &RunConfig, draws_dir: &Path, out_dir: &Path) -> Result<usize> {
    let header = io::svg_header_comment(config);
    let mut written = 0;
    for (id, path) in list_draws_files(draws_dir)? {
        let table = DrawsTable::read(&path)?;
        for (p, name) in table.param_names.iter().enumerate() {
            let chains: Vec<Vec<f64>> = table
                .chains
                .iter()
                .map(|chain| chain.iter().map(|row| row[p]).collect())
                .collect();
            let svg_text = svg::traces_svg(&format!("{name} ({id})"), &chains, &header)?;
            io::write_atomic(
                &out_dir.join(format!("trace_{id}_{name}.svg")),
                svg_text.as_bytes(),
            )?;
            written += 1;
        }
    }
    Ok(written)
}

/// Family of undamped recovery curves across shape parameters.
#[allow(clippy::too_many_arguments)]
pub fn growth_curves(
    config: &RunConfig,
    k: f64,
    alpha: f64,
    c0: f64,
    gammas: &[f64],
    t_max: f64,
    out_path: &Path,
) -> Result<()> {
    let svg_text =
        svg::growth_curves_svg(k, alpha, c0, gammas, t_max, &io::svg_header_comment(config))?;
    io::write_atomic(out_path, svg_text.as_bytes())
}
