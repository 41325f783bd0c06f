//! Per-year rank-normalized, binned return targets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::key::parse_date;
use crate::market_data::ReturnRecord;
use crate::FilingKey;

pub const DEFAULT_BINS: usize = 5;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("unknown target field {0:?} (expected 12m or max)")]
    UnknownField(String),
    #[error("bins must be at least 2, got {0}")]
    InvalidBins(usize),
    #[error("no return records to label")]
    Empty,
    #[error("non-finite {field} return for {key}")]
    NonFinite { field: SourceField, key: FilingKey },
    #[error("malformed labels file: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which raw return a label is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceField {
    #[serde(rename = "12m")]
    Target12m,
    #[serde(rename = "max")]
    TargetMax,
}

impl SourceField {
    pub fn value(self, r: &ReturnRecord) -> f64 {
        match self {
            SourceField::Target12m => r.target_12m,
            SourceField::TargetMax => r.target_max,
        }
    }

    pub fn benchmark_value(self, r: &ReturnRecord) -> f64 {
        match self {
            SourceField::Target12m => r.sp500_12m,
            SourceField::TargetMax => r.sp500_max,
        }
    }
}

impl fmt::Display for SourceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceField::Target12m => "12m",
            SourceField::TargetMax => "max",
        })
    }
}

impl FromStr for SourceField {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "12m" | "target_12m" => Ok(SourceField::Target12m),
            "max" | "target_max" => Ok(SourceField::TargetMax),
            other => Err(LabelError::UnknownField(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub ticker: String,
    pub filing_date: NaiveDate,
    pub label: f64,
    pub source_field: SourceField,
    pub year: i32,
}

impl LabeledExample {
    pub fn key(&self) -> FilingKey {
        FilingKey::new(self.ticker.clone(), self.filing_date)
    }
}

/// Labels every record by its rank within its filing year.
///
/// Ranks are averaged over ties. A normalized rank u = (rank - 1) / (n - 1)
/// falls into bin floor(u * bins), with u = 1 folded into the top bin, and
/// the label is the bin index over (bins - 1). A year with a single record
/// gets 0.5. Output is sorted by (ticker, filing_date).
pub fn make_labels(
    records: &[ReturnRecord],
    field: SourceField,
    bins: usize,
) -> Result<Vec<LabeledExample>, LabelError> {
    if bins < 2 {
        return Err(LabelError::InvalidBins(bins));
    }
    if records.is_empty() {
        return Err(LabelError::Empty);
    }
    let mut by_year: BTreeMap<i32, Vec<(&ReturnRecord, f64)>> = BTreeMap::new();
    for r in records {
        let v = field.value(r);
        if !v.is_finite() {
            return Err(LabelError::NonFinite { field, key: r.key() });
        }
        by_year.entry(r.filing_date.year()).or_default().push((r, v));
    }

    let mut out = Vec::with_capacity(records.len());
    for (year, mut group) in by_year {
        group.sort_by(|a, b| a.1.total_cmp(&b.1));
        let n = group.len();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && group[j + 1].1 == group[i].1 {
                j += 1;
            }
            // 1-based ranks i+1..=j+1; twice their average is i + j + 2
            let label = if n == 1 { 0.5 } else { bin_label(i + j, n, bins) };
            for (r, _) in &group[i..=j] {
                out.push(LabeledExample {
                    ticker: r.ticker.clone(),
                    filing_date: r.filing_date,
                    label,
                    source_field: field,
                    year,
                });
            }
            i = j + 1;
        }
    }
    out.sort_by(|a, b| (&a.ticker, a.filing_date).cmp(&(&b.ticker, b.filing_date)));
    Ok(out)
}

/// `twice_rank_minus_two` is 2 * (average rank - 1); integer arithmetic keeps
/// bin edges exact.
fn bin_label(twice_rank_minus_two: usize, n: usize, bins: usize) -> f64 {
    let b = (twice_rank_minus_two * bins / (2 * (n - 1))).min(bins - 1);
    b as f64 / (bins - 1) as f64
}

pub const LABELS_HEADER: [&str; 4] = ["ticker", "filing_date", "year", "label"];

pub fn write_labels_csv(path: &Path, labels: &[LabeledExample]) -> Result<(), LabelError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LABELS_HEADER)?;
    for l in labels {
        w.write_record([
            l.ticker.clone(),
            l.filing_date.to_string(),
            l.year.to_string(),
            l.label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `labels.csv`. The source field is not stored in the file and is
/// supplied by the caller.
pub fn read_labels_csv(path: &Path, field: SourceField) -> Result<Vec<LabeledExample>, LabelError> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(LABELS_HEADER) {
        return Err(LabelError::Parse(format!("unexpected header in {}", path.display())));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| LabelError::Parse(format!("row {}: {m}", i + 1));
        let filing_date = parse_date(&rec[1]).map_err(|e| bad(e.to_string()))?;
        let year = rec[2].parse().map_err(|e| bad(format!("year: {e}")))?;
        let label: f64 = rec[3].parse().map_err(|e| bad(format!("label: {e}")))?;
        if !(0.0..=1.0).contains(&label) {
            return Err(bad(format!("label {label} outside [0,1]")));
        }
        out.push(LabeledExample { ticker: rec[0].to_string(), filing_date, label, source_field: field, year });
    }
    Ok(out)
}
