//! `segment`: survey CSV -> recovery trajectories + disturbance events.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{Context, Result};
use biphasic::data::{
    aggregate, detect_disturbances, estimate_k, parse_survey, segment, DisturbanceEvent,
    SegmentOptions, Taxonomy,
};
use biphasic::likelihood::Trajectory;

use super::{fmt, TrajectoryFile};
use crate::config::RunConfig;
use crate::io;

pub struct SegmentSummary {
    pub records: usize,
    pub rejected_rows: usize,
    pub sites: usize,
    pub events: usize,
    pub trajectories: usize,
    pub warnings: Vec<String>,
}

pub fn run(
    config: &RunConfig,
    survey_path: &Path,
    taxonomy_path: Option<&Path>,
    site_meta_path: Option<&Path>,
    out_dir: &Path,
) -> Result<SegmentSummary> {
    let taxonomy = match taxonomy_path {
        Some(p) => {
            let file =
                std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Taxonomy::from_csv(file)?
        }
        None => Taxonomy::builtin(),
    };
    let overrides = match site_meta_path {
        Some(p) => read_k_overrides(p)?,
        None => HashMap::new(),
    };

    let survey = std::fs::File::open(survey_path)
        .with_context(|| format!("opening {}", survey_path.display()))?;
    let parsed = parse_survey(survey, &taxonomy)?;
    let mut warnings = parsed.warnings.clone();
    for (line, reason) in &parsed.rejected_rows {
        warnings.push(format!("rejected line {line}: {reason}"));
    }

    let series = aggregate(&parsed.records)?;
    let mut all_events: Vec<DisturbanceEvent> = Vec::new();
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for s in &series {
        let detection = detect_disturbances(s, config.p_threshold)?;
        warnings.extend(detection.warnings.iter().cloned());
        let k = estimate_k(s, overrides.get(&(s.reef.clone(), s.site.clone())).copied())?;
        let opts = SegmentOptions {
            n_groups: config.model,
            min_post_visits: config.min_post_visits,
            k,
        };
        trajectories.extend(segment(s, &detection.events, &opts)?);
        all_events.extend(detection.events);
    }
    trajectories.sort_by(|a, b| a.id.cmp(&b.id));

    let summary = SegmentSummary {
        records: parsed.records.len(),
        rejected_rows: parsed.rejected_rows.len(),
        sites: series.len(),
        events: all_events.len(),
        trajectories: trajectories.len(),
        warnings,
    };

    let file = TrajectoryFile {
        meta: io::json_meta(config),
        model: config.model,
        trajectories,
    };
    file.write(&out_dir.join("trajectories.json"))?;

    let mut events_csv = io::csv_header_comment(config);
    events_csv.push_str("reef,site,visit_index,date,p_value\n");
    for e in &all_events {
        events_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            e.reef,
            e.site,
            e.visit_index,
            e.date,
            fmt(e.p_value)
        ));
    }
    io::write_atomic(&out_dir.join("events.csv"), events_csv.as_bytes())?;
    Ok(summary)
}

/// Site metadata CSV: `reef,site,K_override`.
fn read_k_overrides(path: &Path) -> Result<HashMap<(String, String), f64>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = io::csv_reader(file);
    let mut out = HashMap::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("site metadata line {}", idx + 2))?;
        if row.len() != 3 {
            anyhow::bail!("site metadata line {}: expected reef,site,K_override", idx + 2);
        }
        let k: f64 = row[2]
            .parse()
            .with_context(|| format!("site metadata line {}: bad K", idx + 2))?;
        out.insert((row[0].to_string(), row[1].to_string()), k);
    }
    Ok(out)
}
