use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{window_bounds, window_returns, MarketDataError, PriceSeries, TradingCalendar};
use crate::key::parse_date;
use crate::FilingKey;

pub const RETURNS_HEADER: [&str; 12] = [
    "ticker",
    "filing_date",
    "next_filing_date",
    "target_12m",
    "target_max",
    "target_min",
    "target_q25",
    "target_q50",
    "target_q75",
    "sp500_12m",
    "sp500_max",
    "flags",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnFlag {
    /// Last filing in the corpus; the window ends at the last available price.
    OpenWindow,
    /// The stock's prices stop before the window end.
    Delisted,
}

impl fmt::Display for ReturnFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReturnFlag::OpenWindow => "open_window",
            ReturnFlag::Delisted => "delisted",
        })
    }
}

impl FromStr for ReturnFlag {
    type Err = MarketDataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open_window" => Ok(ReturnFlag::OpenWindow),
            "delisted" => Ok(ReturnFlag::Delisted),
            other => Err(MarketDataError::Parse(format!("unknown flag {other:?}"))),
        }
    }
}

/// Stock and benchmark returns over one filing-to-filing window.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnRecord {
    pub ticker: String,
    pub filing_date: NaiveDate,
    pub next_filing_date: Option<NaiveDate>,
    pub target_12m: f64,
    pub target_max: f64,
    pub target_min: f64,
    pub target_q25: f64,
    pub target_q50: f64,
    pub target_q75: f64,
    pub sp500_12m: f64,
    pub sp500_max: f64,
    pub flags: Vec<ReturnFlag>,
    /// (start, end) shared by the stock and benchmark computations. Not
    /// persisted in `returns.csv`.
    pub window: Option<(NaiveDate, NaiveDate)>,
}

impl ReturnRecord {
    pub fn key(&self) -> FilingKey {
        FilingKey::new(self.ticker.clone(), self.filing_date)
    }
}

/// A filing whose returns could not be computed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnWarning {
    pub ticker: String,
    pub filing_date: NaiveDate,
    pub message: String,
}

/// Computes a [`ReturnRecord`] for every filing that has enough price data.
///
/// Filings are grouped per ticker; each window runs to the ticker's next
/// filing, or to the last available price for its final filing. The
/// benchmark's dates serve as the trading calendar and the benchmark is
/// evaluated over exactly the stock's window.
pub fn compute_return_records(
    filings: &[FilingKey],
    prices: &BTreeMap<String, PriceSeries>,
    benchmark: &PriceSeries,
) -> (Vec<ReturnRecord>, Vec<ReturnWarning>) {
    let calendar = TradingCalendar::from_series(benchmark);
    let mut by_ticker: BTreeMap<&str, Vec<NaiveDate>> = BTreeMap::new();
    for f in filings {
        by_ticker.entry(f.ticker.as_str()).or_default().push(f.filing_date);
    }

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (ticker, mut dates) in by_ticker {
        dates.sort();
        dates.dedup();
        for (i, &filing_date) in dates.iter().enumerate() {
            let warn = |message: String| ReturnWarning {
                ticker: ticker.to_string(),
                filing_date,
                message,
            };
            let Some(series) = prices.get(ticker).filter(|s| !s.is_empty()) else {
                warnings.push(warn("no price series".into()));
                continue;
            };
            match record_for(ticker, filing_date, dates.get(i + 1).copied(), series, benchmark, &calendar)
            {
                Ok(r) => records.push(r),
                Err(e) => {
                    log::warn!("{ticker}@{filing_date}: {e}");
                    warnings.push(warn(e.to_string()));
                }
            }
        }
    }
    (records, warnings)
}

fn record_for(
    ticker: &str,
    filing_date: NaiveDate,
    next_filing_date: Option<NaiveDate>,
    series: &PriceSeries,
    benchmark: &PriceSeries,
    calendar: &TradingCalendar,
) -> Result<ReturnRecord, MarketDataError> {
    let mut flags = Vec::new();
    let series_last = series.last_date().expect("non-empty series");
    let window_limit = match next_filing_date {
        Some(next) => next,
        None => {
            flags.push(ReturnFlag::OpenWindow);
            let cal_last = calendar.last().ok_or(MarketDataError::CalendarCoverage(filing_date))?;
            series_last.min(cal_last)
        }
    };
    let (start, end) = window_bounds(filing_date, window_limit, calendar)?;
    if series_last < end {
        flags.push(ReturnFlag::Delisted);
    }
    let stock = window_returns(series, start, end)?;
    let bench = window_returns(benchmark, start, end)?;
    Ok(ReturnRecord {
        ticker: ticker.to_string(),
        filing_date,
        next_filing_date,
        target_12m: stock.r_12m,
        target_max: stock.r_max,
        target_min: stock.r_min,
        target_q25: stock.r_q25,
        target_q50: stock.r_q50,
        target_q75: stock.r_q75,
        sp500_12m: bench.r_12m,
        sp500_max: bench.r_max,
        flags,
        window: Some((start, end)),
    })
}

/// Writes `returns.csv` sorted by (ticker, filing_date). Flags are
/// `;`-separated.
pub fn write_returns_csv(path: &Path, records: &[ReturnRecord]) -> Result<(), MarketDataError> {
    let mut sorted: Vec<&ReturnRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.ticker, a.filing_date).cmp(&(&b.ticker, b.filing_date)));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RETURNS_HEADER)?;
    for r in sorted {
        let flags: Vec<String> = r.flags.iter().map(ToString::to_string).collect();
        w.write_record([
            r.ticker.clone(),
            r.filing_date.to_string(),
            r.next_filing_date.map(|d| d.to_string()).unwrap_or_default(),
            r.target_12m.to_string(),
            r.target_max.to_string(),
            r.target_min.to_string(),
            r.target_q25.to_string(),
            r.target_q50.to_string(),
            r.target_q75.to_string(),
            r.sp500_12m.to_string(),
            r.sp500_max.to_string(),
            flags.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_returns_csv(path: &Path) -> Result<Vec<ReturnRecord>, MarketDataError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RETURNS_HEADER {
        return Err(MarketDataError::Parse(format!("unexpected returns header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| MarketDataError::Parse(format!("returns row {}: {m}", i + 1));
        let date = |s: &str| parse_date(s).map_err(|e| bad(format!("{s:?}: {e}")));
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        out.push(ReturnRecord {
            ticker: rec[0].to_string(),
            filing_date: date(&rec[1])?,
            next_filing_date: if rec[2].is_empty() { None } else { Some(date(&rec[2])?) },
            target_12m: num(&rec[3])?,
            target_max: num(&rec[4])?,
            target_min: num(&rec[5])?,
            target_q25: num(&rec[6])?,
            target_q50: num(&rec[7])?,
            target_q75: num(&rec[8])?,
            sp500_12m: num(&rec[9])?,
            sp500_max: num(&rec[10])?,
            flags: rec[11]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()?,
            window: None,
        });
    }
    Ok(out)
}
