//! Survey ingestion, site aggregation, disturbance detection, trajectory
//! segmentation, carrying-capacity estimation, and synthetic data.
//!
//! The survey format is a UTF-8 CSV with a header row and the columns
//! `reef,site,transect,date,group,cover_percent`, dates in ISO-8601. Group
//! labels are resolved through a taxonomy table onto the two model groups,
//! abiotic cover, transient silt, or other benthos.

mod survey;
mod synthetic;

pub use survey::{
    aggregate, detect_disturbances, estimate_k, parse_survey, segment, write_survey,
    DetectionOutcome, ParseOutcome, SegmentOptions,
};
pub use synthetic::generate_synthetic;

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model-facing classification of a raw survey label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoralGroup {
    Acroporidae,
    OtherHardCoral,
    Abiotic,
    /// Abiotic cover flagged as transient silt; excluded from the
    /// carrying-capacity estimate.
    Silt,
    Other,
}

impl CoralGroup {
    pub fn canonical_label(self) -> &'static str {
        match self {
            CoralGroup::Acroporidae => "acroporidae",
            CoralGroup::OtherHardCoral => "other-hard-coral",
            CoralGroup::Abiotic => "abiotic",
            CoralGroup::Silt => "silt",
            CoralGroup::Other => "other",
        }
    }

    pub fn is_hard_coral(self) -> bool {
        matches!(self, CoralGroup::Acroporidae | CoralGroup::OtherHardCoral)
    }

    pub fn is_abiotic(self) -> bool {
        matches!(self, CoralGroup::Abiotic | CoralGroup::Silt)
    }
}

/// Raw-label-to-group mapping. Canonical labels are always recognised;
/// survey-specific labels are added from a taxonomy CSV.
#[derive(Debug, Clone, Default)]
pub struct Taxonomy {
    map: HashMap<String, CoralGroup>,
}

impl Taxonomy {
    pub fn builtin() -> Self {
        let mut map = HashMap::new();
        for g in [
            CoralGroup::Acroporidae,
            CoralGroup::OtherHardCoral,
            CoralGroup::Abiotic,
            CoralGroup::Silt,
            CoralGroup::Other,
        ] {
            map.insert(g.canonical_label().to_string(), g);
        }
        Self { map }
    }

    /// Extend the builtin table from `raw_label,model_group` CSV rows.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut tax = Self::builtin();
        let mut csv_reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        for (idx, row) in csv_reader.records().enumerate() {
            let line = idx as u64 + 2;
            let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            if row.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected raw_label,model_group, got {} fields", row.len()),
                });
            }
            let group = tax.resolve(&row[1]).ok_or_else(|| Error::Parse {
                line,
                message: format!("unknown model group `{}`", &row[1]),
            })?;
            tax.map.insert(row[0].to_lowercase(), group);
        }
        Ok(tax)
    }

    pub fn insert(&mut self, raw_label: &str, group: CoralGroup) {
        self.map.insert(raw_label.to_lowercase(), group);
    }

    pub fn resolve(&self, raw_label: &str) -> Option<CoralGroup> {
        self.map.get(&raw_label.to_lowercase()).copied()
    }
}

/// One photographed transect reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransectRecord {
    pub reef: String,
    pub site: String,
    pub transect: String,
    pub date: NaiveDate,
    pub group: CoralGroup,
    pub raw_label: String,
    pub cover: f64,
}

/// Calendar date as decimal years, on the model's time axis.
pub fn decimal_years(date: NaiveDate) -> f64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
    1970.0 + (date - epoch).num_days() as f64 / 365.25
}

/// Inverse of [`decimal_years`], to the nearest day.
pub fn date_from_decimal_years(years: f64) -> NaiveDate {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
    let days = ((years - 1970.0) * 365.25).round() as i64;
    epoch + chrono::Duration::days(days)
}

/// Site-level aggregation of one survey visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteVisit {
    pub date: NaiveDate,
    pub time: f64,
    /// Transects present at this visit.
    pub transect_count: usize,
    /// True when fewer transects were present than the site maximum.
    pub missing_transects: bool,
    /// Per-group (mean, variance of the mean) pairs.
    pub acroporidae: (f64, f64),
    pub other_hard: (f64, f64),
    pub total_hard: (f64, f64),
    /// Mean abiotic cover (silt included) across transects.
    pub abiotic_mean: f64,
    /// True when any silt record is present at this visit.
    pub silt_flagged: bool,
    /// Per-transect total hard coral, keyed by transect id, for the paired
    /// disturbance test.
    pub transect_totals: Vec<(String, f64)>,
}

/// All visits of one monitored site, time-ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSeries {
    pub reef: String,
    pub site: String,
    pub visits: Vec<SiteVisit>,
}

impl SiteSeries {
    pub fn key(&self) -> String {
        format!("{}/{}", self.reef, self.site)
    }
}

/// A statistically significant decline between consecutive visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEvent {
    pub reef: String,
    pub site: String,
    /// Index of the later visit of the declining pair: the visit that opens
    /// a recovery trajectory.
    pub visit_index: usize,
    pub date: NaiveDate,
    pub p_value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_resolves_builtin_and_custom() {
        let tax = Taxonomy::builtin();
        assert_eq!(tax.resolve("Acroporidae"), Some(CoralGroup::Acroporidae));
        assert_eq!(tax.resolve("other-hard-coral"), Some(CoralGroup::OtherHardCoral));
        assert_eq!(tax.resolve("SILT"), Some(CoralGroup::Silt));
        assert_eq!(tax.resolve("poritidae"), None);

        let csv = "raw_label,model_group\nPoritidae,other-hard-coral\nsand,abiotic\n";
        let tax = Taxonomy::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(tax.resolve("Poritidae"), Some(CoralGroup::OtherHardCoral));
        assert_eq!(tax.resolve("sand"), Some(CoralGroup::Abiotic));

        let bad = "raw_label,model_group\nPoritidae,nonsense\n";
        assert!(Taxonomy::from_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn decimal_year_roundtrip() {
        for (y, m, d) in [(1992, 1, 15), (2005, 7, 1), (2020, 12, 31)] {
            let date = NaiveDate::from_ymd_opt(y, m, d).unwrap();
            let t = decimal_years(date);
            assert_eq!(date_from_decimal_years(t), date);
            assert!((t - y as f64).abs() < 1.01);
        }
        // one year apart differs by ~1.0
        let a = decimal_years(NaiveDate::from_ymd_opt(2000, 3, 1).unwrap());
        let b = decimal_years(NaiveDate::from_ymd_opt(2001, 3, 1).unwrap());
        assert!((b - a - 1.0).abs() < 0.01);
    }
}
