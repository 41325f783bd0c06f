//! Daily prices and filing-window returns for stocks and the benchmark.

mod records;
mod window;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;
use thiserror::Error;

pub use records::{
    compute_return_records, read_returns_csv, write_returns_csv, ReturnFlag, ReturnRecord,
    ReturnWarning, RETURNS_HEADER,
};
pub use window::{
    percentile, window_bounds, window_returns, TradingCalendar, WindowReturns, MAX_PERCENTILE,
    MIN_OBSERVATIONS, MIN_PERCENTILE,
};

use crate::key::parse_date;

#[derive(Debug, Error, PartialEq)]
pub enum MarketDataError {
    #[error("price series {symbol}: {message}")]
    InvalidSeries { symbol: String, message: String },
    #[error("next filing {next} is not after filing {filing}")]
    WindowOrder { filing: NaiveDate, next: NaiveDate },
    #[error("trading calendar does not cover {0}")]
    CalendarCoverage(NaiveDate),
    #[error("window collapsed: start {start} is not before end {end}")]
    CollapsedWindow { start: NaiveDate, end: NaiveDate },
    #[error("only {found} observations in window, need at least {needed}")]
    InsufficientData { found: usize, needed: usize },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MarketDataError {
    fn from(e: std::io::Error) -> Self {
        MarketDataError::Io(e.to_string())
    }
}

impl From<csv::Error> for MarketDataError {
    fn from(e: csv::Error) -> Self {
        MarketDataError::Parse(e.to_string())
    }
}

/// Adjusted daily closes for one symbol, strictly increasing in date.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    symbol: String,
    observations: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    pub fn new(
        symbol: impl Into<String>,
        observations: Vec<(NaiveDate, f64)>,
    ) -> Result<Self, MarketDataError> {
        let symbol = symbol.into();
        let invalid = |message: String| MarketDataError::InvalidSeries { symbol: symbol.clone(), message };
        if let Some(w) = observations.windows(2).find(|w| w[0].0 >= w[1].0) {
            return Err(invalid(format!("dates not strictly increasing at {}", w[1].0)));
        }
        if let Some((d, p)) = observations.iter().find(|(_, p)| !(p.is_finite() && *p > 0.0)) {
            return Err(invalid(format!("non-positive or non-finite price {p} on {d}")));
        }
        Ok(Self { symbol, observations })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn observations(&self) -> &[(NaiveDate, f64)] {
        &self.observations
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.observations.first().map(|o| o.0)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.observations.last().map(|o| o.0)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.observations.iter().map(|o| o.0)
    }
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    symbol: String,
    date: String,
    adjusted_close: f64,
}

/// Reads every `*.csv` file in `dir` (columns `symbol,date,adjusted_close`)
/// and groups rows by symbol. Symbols are upper-cased.
pub fn load_price_dir(dir: &Path) -> Result<BTreeMap<String, PriceSeries>, MarketDataError> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut grouped: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for path in paths {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&path)?;
        for row in reader.deserialize::<PriceRow>() {
            let row = row?;
            let date = parse_date(&row.date).map_err(|e| {
                MarketDataError::Parse(format!("{}: date {:?}: {e}", path.display(), row.date))
            })?;
            grouped.entry(row.symbol.to_ascii_uppercase()).or_default().push((date, row.adjusted_close));
        }
    }
    grouped
        .into_iter()
        .map(|(symbol, mut obs)| {
            obs.sort_by_key(|o| o.0);
            PriceSeries::new(symbol.clone(), obs).map(|s| (symbol, s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    #[test]
    fn series_validation() {
        assert!(PriceSeries::new("X", vec![(d("2020-01-02"), 1.0), (d("2020-01-02"), 2.0)]).is_err());
        assert!(PriceSeries::new("X", vec![(d("2020-01-02"), 0.0)]).is_err());
        assert!(PriceSeries::new("X", vec![(d("2020-01-02"), f64::NAN)]).is_err());
        assert!(PriceSeries::new("X", vec![(d("2020-01-02"), 1.0), (d("2020-01-03"), 2.0)]).is_ok());
    }

    #[test]
    fn price_dir_groups_symbols_across_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("a.csv"),
            "symbol,date,adjusted_close\nacme,2020-01-03,11.0\nACME,2020-01-02,10.0\n",
        )
        .unwrap();
        fs::write(dir.path().join("b.csv"), "symbol,date,adjusted_close\nSPX,2020-01-02,3000\n")
            .unwrap();
        fs::write(dir.path().join("readme.txt"), "ignored").unwrap();
        let all = load_price_dir(dir.path()).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all["ACME"].observations(), &[(d("2020-01-02"), 10.0), (d("2020-01-03"), 11.0)]);
    }

    #[test]
    fn duplicate_dates_across_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "symbol,date,adjusted_close\nX,2020-01-02,1\n").unwrap();
        fs::write(dir.path().join("b.csv"), "symbol,date,adjusted_close\nX,2020-01-02,2\n").unwrap();
        assert!(matches!(load_price_dir(dir.path()), Err(MarketDataError::InvalidSeries { .. })));
    }
}
