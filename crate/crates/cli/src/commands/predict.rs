//! `predict`: posterior predictive bands and per-observation quantiles.

use std::path::Path;

use anyhow::{bail, Context, Result};
use biphasic::likelihood::PosteriorTarget;
use biphasic::predictive::{observed_quantile, simulate_predictive, smallest_cri};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{draws_file_name, fmt, TrajectoryFile};
use crate::config::{predictive_stream, RunConfig};
use crate::io;

pub struct PredictSummary {
    pub trajectories: usize,
    pub observations: usize,
}

/// Write `bands.csv` (trajectory, group, time, level, lo, hi) and
/// `quantiles.csv` (trajectory, group, time, j, obs, q_obs, beta).
pub fn run(
    config: &RunConfig,
    draws_dir: &Path,
    trajectories_path: &Path,
    out_dir: &Path,
) -> Result<PredictSummary> {
    let file = TrajectoryFile::read(trajectories_path)?;

    let mut bands_csv = io::csv_header_comment(config);
    bands_csv.push_str("trajectory,group,time,level,lo,hi\n");
    let mut quantiles_csv = io::csv_header_comment(config);
    quantiles_csv.push_str("trajectory,group,time,j,obs,q_obs,beta\n");

    let mut observations = 0;
    for traj in &file.trajectories {
        let draws_path = draws_dir.join(draws_file_name(&traj.id));
        if !draws_path.exists() {
            bail!("no draws table for trajectory {} in {}", traj.id, draws_dir.display());
        }
        let table = super::DrawsTable::read(&draws_path)
            .with_context(|| format!("reading draws for {}", traj.id))?;
        if table.param_names.len() != 4 * traj.n_groups() {
            bail!(
                "draws for {} have {} parameters but the trajectory has {} groups",
                traj.id,
                table.param_names.len(),
                traj.n_groups()
            );
        }
        let pooled = table.pooled();
        let prior = config.prior(traj.duration())?;
        let target = PosteriorTarget::new(traj, prior, config.solver())?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(predictive_stream(&traj.id));
        let ensemble =
            simulate_predictive(&pooled, traj, &target, config.predictive_draws, &mut rng)?;

        for band in &ensemble.bands {
            for (j, &time) in traj.times.iter().enumerate() {
                for (g, gname) in traj.group_names.iter().enumerate() {
                    bands_csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        traj.id,
                        gname,
                        fmt(time),
                        band.level,
                        fmt(band.lo[j][g]),
                        fmt(band.hi[j][g])
                    ));
                }
            }
        }

        let q = observed_quantile(&ensemble, traj)?;
        for (j, &time) in traj.times.iter().enumerate() {
            for (g, gname) in traj.group_names.iter().enumerate() {
                let beta = smallest_cri(q[j][g]);
                quantiles_csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    traj.id,
                    gname,
                    fmt(time),
                    j,
                    fmt(traj.obs[j][g]),
                    fmt(q[j][g]),
                    fmt(beta)
                ));
                observations += 1;
            }
        }
    }

    io::write_atomic(&out_dir.join("bands.csv"), bands_csv.as_bytes())?;
    io::write_atomic(&out_dir.join("quantiles.csv"), quantiles_csv.as_bytes())?;
    Ok(PredictSummary { trajectories: file.trajectories.len(), observations })
}
