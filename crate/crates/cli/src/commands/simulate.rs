//! `simulate`: fabricate a transect-level survey CSV from known parameters.
//!
//! Each simulated site gets a stretch of stable pre-disturbance visits, a
//! sharp drop to the recovery initial condition (the disturbance the
//! segmenter must find), and a model-driven noisy recovery. Around every
//! site mean the transects carry a fixed zero-mean, unit-sample-variance
//! pattern scaled to the requested standard error, so aggregation recovers
//! the generating means and variances exactly; the pattern rotates across
//! visits to keep paired transect differences non-degenerate.

use std::path::Path;

use anyhow::{bail, Context, Result};
use biphasic::data::{generate_synthetic, write_survey, CoralGroup, TransectRecord};
use biphasic::growth::{GroupParams, GrowthParams, InitialState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{stream_base, RunConfig};
use crate::io;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSpec {
    #[serde(default = "default_transects")]
    pub n_transects: usize,
    pub sites: Vec<SiteSpec>,
}

fn default_transects() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteSpec {
    pub reef: String,
    pub site: String,
    pub k: f64,
    /// Start of recovery in decimal years.
    pub t0: f64,
    /// Offsets (years, negative) of stable pre-disturbance visits.
    pub pre_offsets: Vec<f64>,
    /// Per-group cover during the pre-disturbance visits.
    pub pre_cover: Vec<f64>,
    pub groups: Vec<GroupParams>,
    /// Per-group cover at the disturbance visit.
    pub c0: Vec<f64>,
    /// Offsets (years, the first must be 0) of the recovery visits.
    pub recovery_offsets: Vec<f64>,
    /// Standard error of the site mean at every visit.
    pub noise_sd: f64,
}

impl SiteSpec {
    fn group_kinds(&self) -> Vec<(CoralGroup, &'static str)> {
        match self.groups.len() {
            1 => vec![(CoralGroup::Acroporidae, "acroporidae")],
            _ => vec![
                (CoralGroup::Acroporidae, "acroporidae"),
                (CoralGroup::OtherHardCoral, "other-hard-coral"),
            ],
        }
    }
}

pub fn run(config: &RunConfig, params_path: &Path, out_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(params_path)
        .with_context(|| format!("reading {}", params_path.display()))?;
    let spec: SimulationSpec = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", params_path.display()))?;
    if spec.sites.is_empty() {
        bail!("simulation spec lists no sites");
    }
    if spec.n_transects < 2 {
        bail!("at least 2 transects are required, got {}", spec.n_transects);
    }

    let mut records = Vec::new();
    for site in &spec.sites {
        records.extend(simulate_site(config, site, spec.n_transects)?);
    }
    validate_transect_sums(&records)?;
    let csv = format!("{}{}", io::csv_header_comment(config), write_survey(&records));
    io::write_atomic(out_path, csv.as_bytes())
}

fn simulate_site(
    config: &RunConfig,
    site: &SiteSpec,
    n_transects: usize,
) -> Result<Vec<TransectRecord>> {
    if site.recovery_offsets.first() != Some(&0.0) {
        bail!("recovery_offsets must start at 0 (site {}/{})", site.reef, site.site);
    }
    if site.pre_cover.len() != site.groups.len() || site.c0.len() != site.groups.len() {
        bail!("pre_cover/c0 group counts disagree with groups (site {}/{})", site.reef, site.site);
    }
    if site.groups.len() > 2 {
        bail!("simulation supports 1 or 2 groups (site {}/{})", site.reef, site.site);
    }
    let params = GrowthParams::new(site.groups.clone(), site.k)?;
    let init = InitialState::new(site.t0, site.c0.clone())?;
    let times: Vec<f64> = site.recovery_offsets.iter().map(|o| site.t0 + o).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream_base(&format!("simulate:{}:{}", site.reef, site.site)));
    let traj = generate_synthetic(
        format!("{}_{}", site.reef, site.site),
        site.reef.clone(),
        site.site.clone(),
        &params,
        &init,
        &times,
        &vec![site.noise_sd; times.len()],
        &mut rng,
    )?;

    let pattern = unit_pattern(n_transects);
    let transect_sd = site.noise_sd * (n_transects as f64).sqrt();
    let abiotic = 100.0 - site.k;
    let kinds = site.group_kinds();

    let mut records = Vec::new();
    let mut emit_visit = |visit_idx: usize, years: f64, means: &[f64]| {
        let date = biphasic::data::date_from_decimal_years(years);
        for t in 0..n_transects {
            let spread = transect_sd * pattern[(t + visit_idx) % n_transects];
            for (g, &(group, label)) in kinds.iter().enumerate() {
                records.push(TransectRecord {
                    reef: site.reef.clone(),
                    site: site.site.clone(),
                    transect: format!("T{t}"),
                    date,
                    group,
                    raw_label: label.into(),
                    cover: (means[g] + spread).clamp(0.0, 100.0),
                });
            }
            if abiotic > 0.0 {
                records.push(TransectRecord {
                    reef: site.reef.clone(),
                    site: site.site.clone(),
                    transect: format!("T{t}"),
                    date,
                    group: CoralGroup::Abiotic,
                    raw_label: "abiotic".into(),
                    cover: abiotic,
                });
            }
        }
    };

    let mut sorted_pre = site.pre_offsets.clone();
    sorted_pre.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (i, off) in sorted_pre.iter().enumerate() {
        if *off >= 0.0 {
            bail!("pre-disturbance offsets must be negative (site {}/{})", site.reef, site.site);
        }
        emit_visit(i, site.t0 + off, &site.pre_cover);
    }
    for (j, &years) in traj.times.iter().enumerate() {
        emit_visit(sorted_pre.len() + j, years, &traj.obs[j]);
    }
    Ok(records)
}

fn validate_transect_sums(records: &[TransectRecord]) -> Result<()> {
    use std::collections::BTreeMap;
    let mut sums: BTreeMap<(&str, &str, &str, chrono::NaiveDate), f64> = BTreeMap::new();
    for r in records {
        *sums
            .entry((r.reef.as_str(), r.site.as_str(), r.transect.as_str(), r.date))
            .or_insert(0.0) += r.cover;
    }
    for ((reef, sitename, transect, date), sum) in sums {
        if sum > 100.5 {
            bail!(
                "simulated covers at {reef}/{sitename} transect {transect} on {date} sum to \
                 {sum:.2}%; lower the cover targets or the noise"
            );
        }
    }
    Ok(())
}

/// Zero-mean pattern with sample variance exactly 1 across `n` points.
fn unit_pattern(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|i| i as f64 - (n as f64 - 1.0) / 2.0).collect();
    let var = raw.iter().map(|x| x * x).sum::<f64>() / (n as f64 - 1.0);
    let scale = 1.0 / var.sqrt();
    raw.iter().map(|x| x * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_has_zero_mean_unit_variance() {
        for n in [2, 3, 5, 8] {
            let p = unit_pattern(n);
            let mean: f64 = p.iter().sum::<f64>() / n as f64;
            let var: f64 =
                p.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12, "n={n} var={var}");
        }
    }
}
