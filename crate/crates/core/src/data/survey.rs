//! Survey CSV ingestion and the site-level pipeline: aggregation, paired
//! disturbance testing, trajectory segmentation, and carrying-capacity
//! estimation.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDate;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{
    decimal_years, CoralGroup, DisturbanceEvent, SiteSeries, SiteVisit, Taxonomy, TransectRecord,
};
use crate::error::{Error, Result};
use crate::likelihood::Trajectory;

/// Transect covers within one (site, transect, date) may exceed 100% by at
/// most this rounding tolerance.
pub const COVER_SUM_TOLERANCE: f64 = 0.5;

/// Parsed records plus ingestion diagnostics.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<TransectRecord>,
    /// Rows dropped for out-of-range cover, with line numbers.
    pub rejected_rows: Vec<(u64, String)>,
    pub warnings: Vec<String>,
}

/// Parse a survey CSV (`reef,site,transect,date,group,cover_percent`).
///
/// Structurally malformed rows and unknown group labels are hard errors with
/// a line number; covers outside [0, 100] reject the row and are counted.
pub fn parse_survey<R: Read>(reader: R, taxonomy: &Taxonomy) -> Result<ParseOutcome> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut out = ParseOutcome::default();
    for (idx, row) in csv_reader.records().enumerate() {
        let line = idx as u64 + 2; // header is line 1
        let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if row.len() != 6 {
            return Err(Error::Parse {
                line,
                message: format!("expected 6 fields, got {}", row.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&row[3], "%Y-%m-%d")
            .map_err(|e| Error::Parse { line, message: format!("bad date `{}`: {e}", &row[3]) })?;
        let group = taxonomy.resolve(&row[4]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unknown group label `{}` (extend the taxonomy table)", &row[4]),
        })?;
        let cover: f64 = row[5]
            .parse()
            .map_err(|e| Error::Parse { line, message: format!("bad cover `{}`: {e}", &row[5]) })?;
        if !(0.0..=100.0).contains(&cover) {
            out.rejected_rows.push((line, format!("cover {cover} outside [0, 100]")));
            continue;
        }
        out.records.push(TransectRecord {
            reef: row[0].to_string(),
            site: row[1].to_string(),
            transect: row[2].to_string(),
            date,
            group,
            raw_label: row[4].to_string(),
            cover,
        });
    }

    if out.records.is_empty() {
        out.warnings.push("survey contained no usable records".to_string());
    }
    validate_cover_sums(&out.records)?;
    Ok(out)
}

fn validate_cover_sums(records: &[TransectRecord]) -> Result<()> {
    let mut sums: BTreeMap<(&str, &str, &str, NaiveDate), f64> = BTreeMap::new();
    for r in records {
        *sums
            .entry((r.reef.as_str(), r.site.as_str(), r.transect.as_str(), r.date))
            .or_insert(0.0) += r.cover;
    }
    for ((reef, site, transect, date), sum) in sums {
        if sum > 100.0 + COVER_SUM_TOLERANCE {
            return Err(Error::Domain(format!(
                "covers at {reef}/{site} transect {transect} on {date} sum to {sum:.2}%"
            )));
        }
    }
    Ok(())
}

/// Render records back to the survey CSV format (with header).
pub fn write_survey(records: &[TransectRecord]) -> String {
    let mut out = String::from("reef,site,transect,date,group,cover_percent\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.reef, r.site, r.transect, r.date, r.raw_label, r.cover
        ));
    }
    out
}

/// Aggregate transect records into site-level visit series.
///
/// Per visit and group: mean over the transects present and the variance of
/// that mean (sample variance divided by the transect count, whatever that
/// count actually is). A visit with a single transect is an error since the
/// variance is undefined.
pub fn aggregate(records: &[TransectRecord]) -> Result<Vec<SiteSeries>> {
    // (reef, site) -> date -> transect -> per-group cover sums
    #[derive(Default, Clone)]
    struct TransectSums {
        acro: f64,
        other: f64,
        abiotic: f64,
        silt_present: bool,
    }
    let mut sites: BTreeMap<(String, String), BTreeMap<NaiveDate, BTreeMap<String, TransectSums>>> =
        BTreeMap::new();
    for r in records {
        let sums = sites
            .entry((r.reef.clone(), r.site.clone()))
            .or_default()
            .entry(r.date)
            .or_default()
            .entry(r.transect.clone())
            .or_default();
        match r.group {
            CoralGroup::Acroporidae => sums.acro += r.cover,
            CoralGroup::OtherHardCoral => sums.other += r.cover,
            CoralGroup::Abiotic => sums.abiotic += r.cover,
            CoralGroup::Silt => {
                sums.abiotic += r.cover;
                sums.silt_present = true;
            }
            CoralGroup::Other => {}
        }
    }

    let mean_and_var_of_mean = |values: &[f64]| -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, var / n)
    };

    let mut out = Vec::new();
    for ((reef, site), by_date) in sites {
        let max_transects = by_date.values().map(|t| t.len()).max().unwrap_or(0);
        let mut visits = Vec::with_capacity(by_date.len());
        for (date, transects) in by_date {
            if transects.len() < 2 {
                return Err(Error::Degenerate(format!(
                    "visit {date} at {reef}/{site} has {} transect(s); the variance of the mean \
                     needs at least 2",
                    transects.len()
                )));
            }
            let mut acro = Vec::new();
            let mut other = Vec::new();
            let mut totals = Vec::new();
            let mut abiotic = Vec::new();
            let mut silt_flagged = false;
            let mut transect_totals = Vec::new();
            for (id, sums) in &transects {
                acro.push(sums.acro);
                other.push(sums.other);
                totals.push(sums.acro + sums.other);
                abiotic.push(sums.abiotic);
                silt_flagged |= sums.silt_present;
                transect_totals.push((id.clone(), sums.acro + sums.other));
            }
            visits.push(SiteVisit {
                date,
                time: decimal_years(date),
                transect_count: transects.len(),
                missing_transects: transects.len() < max_transects,
                acroporidae: mean_and_var_of_mean(&acro),
                other_hard: mean_and_var_of_mean(&other),
                total_hard: mean_and_var_of_mean(&totals),
                abiotic_mean: abiotic.iter().sum::<f64>() / abiotic.len() as f64,
                silt_flagged,
                transect_totals,
            });
        }
        out.push(SiteSeries { reef, site, visits });
    }
    Ok(out)
}

/// Disturbance events plus the warnings raised while pairing transects.
#[derive(Debug, Clone, Default)]
pub struct DetectionOutcome {
    pub events: Vec<DisturbanceEvent>,
    pub warnings: Vec<String>,
}

/// One-sided paired t-test on total hard coral between consecutive visits.
///
/// Transects are paired by id; unmatched ids are dropped with a warning. A
/// decline with `p <= p_threshold` marks the later visit as a disturbance.
pub fn detect_disturbances(series: &SiteSeries, p_threshold: f64) -> Result<DetectionOutcome> {
    if !(p_threshold > 0.0 && p_threshold < 1.0) {
        return Err(Error::Config(format!("p threshold must be in (0, 1), got {p_threshold}")));
    }
    let mut out = DetectionOutcome::default();
    for w in series.visits.windows(2) {
        let (earlier, later) = (&w[0], &w[1]);
        let before: BTreeMap<&str, f64> =
            earlier.transect_totals.iter().map(|(id, v)| (id.as_str(), *v)).collect();
        let mut diffs = Vec::new();
        let mut unmatched = 0;
        for (id, after_total) in &later.transect_totals {
            match before.get(id.as_str()) {
                Some(before_total) => diffs.push(after_total - before_total),
                None => unmatched += 1,
            }
        }
        unmatched += earlier
            .transect_totals
            .iter()
            .filter(|(id, _)| !later.transect_totals.iter().any(|(id2, _)| id2 == id))
            .count();
        if unmatched > 0 {
            out.warnings.push(format!(
                "{}: {unmatched} unmatched transect id(s) between {} and {}",
                series.key(),
                earlier.date,
                later.date
            ));
        }
        if diffs.len() < 2 {
            out.warnings.push(format!(
                "{}: fewer than 2 paired transects between {} and {}; pair skipped",
                series.key(),
                earlier.date,
                later.date
            ));
            continue;
        }
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        if var <= 0.0 {
            out.warnings.push(format!(
                "{}: identical differences between {} and {}; t statistic undefined",
                series.key(),
                earlier.date,
                later.date
            ));
            continue;
        }
        let t = mean / (var / n).sqrt();
        let dist = StudentsT::new(0.0, 1.0, n - 1.0)
            .map_err(|e| Error::Degenerate(format!("t distribution: {e}")))?;
        let p = dist.cdf(t); // decline is the left tail
        if p <= p_threshold {
            let visit_index = series
                .visits
                .iter()
                .position(|v| v.date == later.date)
                .expect("later visit is part of the series");
            out.events.push(DisturbanceEvent {
                reef: series.reef.clone(),
                site: series.site.clone(),
                visit_index,
                date: later.date,
                p_value: p,
            });
        }
    }
    Ok(out)
}

/// Segmentation controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentOptions {
    /// Number of model groups: 1 (total hard coral) or 2 (Acroporidae and
    /// other hard corals).
    pub n_groups: usize,
    /// Minimum visits after the disturbance visit for a usable trajectory.
    pub min_post_visits: usize,
    /// Carrying capacity assigned to every trajectory of the site.
    pub k: f64,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { n_groups: 1, min_post_visits: 3, k: 90.0 }
    }
}

/// Cut a site series into recovery trajectories.
///
/// Each trajectory starts at a disturbance visit and ends at the visit
/// before the next disturbance (the last one runs to the end of the
/// series); spans with fewer than `min_post_visits` visits after the start
/// are dropped. There is no restriction on the initial cover.
pub fn segment(
    series: &SiteSeries,
    events: &[DisturbanceEvent],
    opts: &SegmentOptions,
) -> Result<Vec<Trajectory>> {
    if !(opts.n_groups == 1 || opts.n_groups == 2) {
        return Err(Error::Config(format!(
            "segmentation supports 1 or 2 model groups, got {}",
            opts.n_groups
        )));
    }
    let mut starts: Vec<usize> = events
        .iter()
        .filter(|e| e.reef == series.reef && e.site == series.site)
        .map(|e| e.visit_index)
        .collect();
    starts.sort_unstable();
    starts.dedup();

    let mut out = Vec::new();
    for (i, &start) in starts.iter().enumerate() {
        let end = if i + 1 < starts.len() { starts[i + 1] - 1 } else { series.visits.len() - 1 };
        if end < start || end - start < opts.min_post_visits {
            continue;
        }
        let visits = &series.visits[start..=end];
        let times: Vec<f64> = visits.iter().map(|v| v.time).collect();
        let (obs, var): (Vec<Vec<f64>>, Vec<Vec<f64>>) = visits
            .iter()
            .map(|v| match opts.n_groups {
                1 => (vec![v.total_hard.0], vec![v.total_hard.1]),
                _ => (
                    vec![v.acroporidae.0, v.other_hard.0],
                    vec![v.acroporidae.1, v.other_hard.1],
                ),
            })
            .unzip();
        let group_names = match opts.n_groups {
            1 => vec!["total".to_string()],
            _ => vec!["acroporidae".to_string(), "other-hard-coral".to_string()],
        };
        let id = format!("{}_{}_{}", series.reef, series.site, visits[0].date)
            .replace([' ', '/'], "-");
        out.push(Trajectory::new(
            id,
            series.reef.clone(),
            series.site.clone(),
            times,
            obs,
            var,
            opts.k,
            group_names,
        )?);
    }
    Ok(out)
}

/// Estimate the carrying capacity of a site.
///
/// An explicit override always wins. Otherwise `K = 100` minus the median
/// abiotic cover over visits, excluding visits flagged for transient silt;
/// the median keeps single-storm silt spikes from depressing the estimate.
pub fn estimate_k(series: &SiteSeries, override_k: Option<f64>) -> Result<f64> {
    if let Some(k) = override_k {
        if !(k.is_finite() && k > 0.0 && k <= 100.0) {
            return Err(Error::Config(format!("K override must be in (0, 100], got {k}")));
        }
        return Ok(k);
    }
    let mut abiotic: Vec<f64> = series
        .visits
        .iter()
        .filter(|v| !v.silt_flagged)
        .map(|v| v.abiotic_mean)
        .collect();
    if abiotic.is_empty() {
        return Err(Error::Config(format!(
            "no silt-free abiotic records at {}; supply an explicit K override",
            series.key()
        )));
    }
    abiotic.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = abiotic.len();
    let median =
        if n % 2 == 1 { abiotic[n / 2] } else { 0.5 * (abiotic[n / 2 - 1] + abiotic[n / 2]) };
    let k = 100.0 - median;
    if k <= 0.0 {
        return Err(Error::Degenerate(format!(
            "median abiotic cover {median}% leaves no room for coral at {}",
            series.key()
        )));
    }
    Ok(k)
}
