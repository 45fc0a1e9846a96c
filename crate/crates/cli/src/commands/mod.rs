//! Command implementations and the file schemas they share.

pub mod coverage;
pub mod diagnose;
pub mod fit;
pub mod plot;
pub mod predict;
pub mod segment;
pub mod simulate;

use std::path::Path;

use anyhow::{bail, Context, Result};
use biphasic::likelihood::Trajectory;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io;

/// `trajectories.json`: the segmented corpus, ready for fitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFile {
    #[serde(rename = "_meta")]
    pub meta: serde_json::Value,
    /// Number of model groups the trajectories were built for.
    pub model: usize,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let file: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if file.trajectories.is_empty() {
            bail!("{} contains no trajectories", path.display());
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        io::write_atomic(path, text.as_bytes())
    }
}

/// Per-trajectory posterior draws, stored as CSV with one row per kept
/// post-burn-in iteration: `chain,iter,<params...>,log_post`.
#[derive(Debug, Clone)]
pub struct DrawsTable {
    pub param_names: Vec<String>,
    /// `chains[c]` holds rows of parameter values for chain `c`.
    pub chains: Vec<Vec<Vec<f64>>>,
    pub log_post: Vec<Vec<f64>>,
}

impl DrawsTable {
    pub fn pooled(&self) -> Vec<Vec<f64>> {
        self.chains.iter().flat_map(|c| c.iter().cloned()).collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let mut reader = io::csv_reader(file);
        let headers = reader.headers()?.clone();
        if headers.len() < 4 || &headers[0] != "chain" || &headers[1] != "iter" {
            bail!("{} does not look like a draws table", path.display());
        }
        let param_names: Vec<String> =
            headers.iter().skip(2).take(headers.len() - 3).map(String::from).collect();
        let mut chains: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut log_post: Vec<Vec<f64>> = Vec::new();
        for row in reader.records() {
            let row = row?;
            let chain: usize = row[0].parse()?;
            while chains.len() <= chain {
                chains.push(Vec::new());
                log_post.push(Vec::new());
            }
            let values: Vec<f64> = (2..2 + param_names.len())
                .map(|i| row[i].parse::<f64>())
                .collect::<Result<_, _>>()?;
            chains[chain].push(values);
            log_post[chain].push(row[row.len() - 1].parse()?);
        }
        if chains.is_empty() {
            bail!("{} contains no draws", path.display());
        }
        Ok(Self { param_names, chains, log_post })
    }
}

/// File name of a trajectory's draws table inside a draws directory.
pub fn draws_file_name(trajectory_id: &str) -> String {
    format!("{trajectory_id}_draws.csv")
}

/// All draws tables in a directory, sorted by trajectory id.
pub fn list_draws_files(dir: &Path) -> Result<Vec<(String, std::path::PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(id) = name.strip_suffix("_draws.csv") {
            out.push((id.to_string(), entry.path()));
        }
    }
    if out.is_empty() {
        bail!("no draws tables (*_draws.csv) found in {}", dir.display());
    }
    out.sort();
    Ok(out)
}

/// Shared float formatting for CSV artifacts: shortest round-trip form, so
/// files are compact, lossless, and byte-stable across reruns.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Initialise the global worker pool once per process.
pub fn init_jobs(config: &RunConfig) -> Result<()> {
    if config.jobs > 0 {
        // ignore the error when tests configure the pool repeatedly
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.jobs).build_global();
    }
    Ok(())
}
