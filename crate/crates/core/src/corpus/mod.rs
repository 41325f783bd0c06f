//! Filing corpus: ticker universe, URL resolution, download, cleaning,
//! persistence and chunking.

mod chunk;
mod clean;
pub mod edgar;
mod store;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{chunk_filing, chunk_text, DEFAULT_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS};
pub use clean::{clean_document, normalize_whitespace};
pub use edgar::{DocumentFetcher, EdgarClient, FilingResolver, LocalDirResolver, UriFetcher};
pub use store::{CorpusStore, ManifestRecord, MANIFEST_FILE};

use crate::FilingKey;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid universe: {0}")]
    InvalidUniverse(String),
    #[error("year_from {from} is after year_to {to}")]
    InvalidYearRange { from: i32, to: i32 },
    #[error("network error for {context}: {message}")]
    Network { context: String, message: String },
    #[error("HTTP {status} fetching {uri}")]
    Http { status: u16, uri: String },
    #[error("document {uri} is empty after cleaning")]
    EmptyDocument { uri: String },
    #[error("unsupported URI {0}")]
    UnsupportedUri(String),
    #[error("environment variable {0} must hold a contact identity (name and email) before contacting EDGAR")]
    MissingIdentity(&'static str),
    #[error("chunk parameters invalid: overlap {overlap} must be smaller than chunk size {size}")]
    InvalidChunkParams { size: usize, overlap: usize },
    #[error("corpus already holds a filing for {ticker} in {year}")]
    DuplicateYear { ticker: String, year: i32 },
    #[error("malformed manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("malformed response from {context}: {message}")]
    Parse { context: String, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    /// Transport failures and throttling responses are worth retrying;
    /// everything else is deterministic.
    pub fn is_retriable(&self) -> bool {
        match self {
            CorpusError::Network { .. } => true,
            CorpusError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniverseEntry {
    pub ticker: String,
    pub cik: String,
}

/// The set of companies to ingest, read from a `ticker,cik` CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TickerUniverse {
    entries: Vec<UniverseEntry>,
}

impl TickerUniverse {
    pub fn new(entries: Vec<UniverseEntry>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(entries.len());
        for UniverseEntry { ticker, cik } in entries {
            let ticker = ticker.trim().to_ascii_uppercase();
            if ticker.is_empty() {
                return Err(CorpusError::InvalidUniverse("empty ticker".into()));
            }
            let cik = pad_cik(&cik).ok_or_else(|| {
                CorpusError::InvalidUniverse(format!("cik {cik:?} for {ticker} is not numeric"))
            })?;
            if !seen.insert(ticker.clone()) {
                return Err(CorpusError::InvalidUniverse(format!("duplicate ticker {ticker}")));
            }
            normalized.push(UniverseEntry { ticker, cik });
        }
        Ok(Self { entries: normalized })
    }

    pub fn from_csv(path: &Path) -> Result<Self, CorpusError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let entries = reader.deserialize().collect::<Result<Vec<UniverseEntry>, _>>()?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[UniverseEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Left-pads a numeric CIK to 10 digits. Returns `None` for non-numeric or
/// over-long input.
pub fn pad_cik(raw: &str) -> Option<String> {
    let raw = raw.trim();
    if raw.is_empty() || raw.len() > 10 || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(format!("{raw:0>10}"))
}

/// A located but not yet downloaded filing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilingRef {
    pub ticker: String,
    pub cik: String,
    pub accession_id: String,
    pub filing_date: NaiveDate,
    pub form: String,
    pub raw_uri: String,
}

impl FilingRef {
    pub fn key(&self) -> FilingKey {
        FilingKey::new(self.ticker.clone(), self.filing_date)
    }

    pub fn is_amendment(&self) -> bool {
        self.form.trim().ends_with("/A")
    }
}

/// One cleaned annual report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filing {
    pub ticker: String,
    pub cik: String,
    pub accession_id: String,
    pub filing_date: NaiveDate,
    pub raw_uri: String,
    pub clean_text: String,
}

impl Filing {
    pub fn key(&self) -> FilingKey {
        FilingKey::new(self.ticker.clone(), self.filing_date)
    }
}

/// A contiguous span of a filing's clean text. `char_span` holds byte
/// offsets that always fall on UTF-8 character boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub filing_key: FilingKey,
    pub chunk_index: usize,
    pub text: String,
    pub char_span: (usize, usize),
}

/// Non-fatal problem recorded while ingesting; collected into an error report
/// instead of aborting the stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarning {
    pub ticker: String,
    pub filing_date: Option<NaiveDate>,
    pub message: String,
}

/// Resolves every 10-K for the universe within `[year_from, year_to]`.
///
/// Amendments are dropped and at most one filing per ticker per calendar year
/// is kept (the earliest original). Tickers the resolver does not know are
/// reported as warnings. Transport failures abort with the ticker in context.
pub fn resolve_filing_urls(
    universe: &TickerUniverse,
    year_from: i32,
    year_to: i32,
    resolver: &dyn FilingResolver,
) -> Result<(Vec<FilingRef>, Vec<IngestWarning>), CorpusError> {
    if year_from > year_to {
        return Err(CorpusError::InvalidYearRange { from: year_from, to: year_to });
    }
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for entry in universe.entries() {
        let found = match resolver.list_annual_reports(entry) {
            Ok(Some(found)) => found,
            Ok(None) => {
                warnings.push(IngestWarning {
                    ticker: entry.ticker.clone(),
                    filing_date: None,
                    message: format!("unknown cik {}", entry.cik),
                });
                continue;
            }
            Err(CorpusError::Network { message, .. }) => {
                return Err(CorpusError::Network { context: entry.ticker.clone(), message })
            }
            Err(e) => return Err(e),
        };
        let in_range: Vec<FilingRef> = found
            .into_iter()
            .filter(|f| (year_from..=year_to).contains(&f.filing_date.year()))
            .collect();
        if in_range.is_empty() {
            warnings.push(IngestWarning {
                ticker: entry.ticker.clone(),
                filing_date: None,
                message: format!("no 10-K filings between {year_from} and {year_to}"),
            });
        }
        out.extend(dedupe_annual(in_range));
    }
    out.sort_by(|a, b| (&a.ticker, a.filing_date).cmp(&(&b.ticker, b.filing_date)));
    Ok((out, warnings))
}

/// Keep one original 10-K per (ticker, calendar year).
fn dedupe_annual(refs: Vec<FilingRef>) -> Vec<FilingRef> {
    let mut by_year: BTreeMap<(String, i32), FilingRef> = BTreeMap::new();
    for r in refs.into_iter().filter(|r| !r.is_amendment()) {
        let slot = (r.ticker.clone(), r.filing_date.year());
        match by_year.get(&slot) {
            Some(existing) if existing.filing_date <= r.filing_date => {}
            _ => {
                by_year.insert(slot, r);
            }
        }
    }
    by_year.into_values().collect()
}

/// Downloads, cleans and stores one filing. Already-stored filings are
/// returned from the store without touching the fetcher.
pub fn fetch_filing(
    entry: &FilingRef,
    fetcher: &dyn DocumentFetcher,
    store: &mut CorpusStore,
) -> Result<Filing, CorpusError> {
    if let Some(existing) = store.load(&entry.key())? {
        return Ok(existing);
    }
    let bytes = fetcher.fetch(&entry.raw_uri)?;
    let raw = String::from_utf8_lossy(&bytes);
    let clean_text = clean_document(&raw);
    if clean_text.is_empty() {
        return Err(CorpusError::EmptyDocument { uri: entry.raw_uri.clone() });
    }
    let filing = Filing {
        ticker: entry.ticker.clone(),
        cik: entry.cik.clone(),
        accession_id: entry.accession_id.clone(),
        filing_date: entry.filing_date,
        raw_uri: entry.raw_uri.clone(),
        clean_text,
    };
    store.insert(&filing)?;
    Ok(filing)
}

/// Summary of an ingest run.
#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub stored: usize,
    pub skipped_existing: usize,
    pub warnings: Vec<IngestWarning>,
}

/// Resolve and fetch every filing for the universe. Per-filing failures are
/// collected as warnings; only resolution-level transport errors abort.
pub fn ingest(
    universe: &TickerUniverse,
    year_from: i32,
    year_to: i32,
    resolver: &dyn FilingResolver,
    fetcher: &dyn DocumentFetcher,
    store: &mut CorpusStore,
) -> Result<IngestOutcome, CorpusError> {
    let (refs, warnings) = resolve_filing_urls(universe, year_from, year_to, resolver)?;
    let mut outcome = IngestOutcome { warnings, ..Default::default() };
    for r in &refs {
        if store.contains(&r.key()) {
            outcome.skipped_existing += 1;
            continue;
        }
        match fetch_filing(r, fetcher, store) {
            Ok(_) => outcome.stored += 1,
            Err(e) => {
                log::warn!("skipping {}: {e}", r.key());
                outcome.warnings.push(IngestWarning {
                    ticker: r.ticker.clone(),
                    filing_date: Some(r.filing_date),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        crate::key::parse_date(s).unwrap()
    }

    fn fref(ticker: &str, d: &str, form: &str) -> FilingRef {
        FilingRef {
            ticker: ticker.into(),
            cik: "0000000001".into(),
            accession_id: format!("{ticker}-{d}-{form}"),
            filing_date: date(d),
            form: form.into(),
            raw_uri: format!("mem://{ticker}/{d}"),
        }
    }

    struct MapResolver(Vec<FilingRef>);

    impl FilingResolver for MapResolver {
        fn list_annual_reports(
            &self,
            entry: &UniverseEntry,
        ) -> Result<Option<Vec<FilingRef>>, CorpusError> {
            if entry.ticker == "GHOST" {
                return Ok(None);
            }
            Ok(Some(self.0.iter().filter(|r| r.ticker == entry.ticker).cloned().collect()))
        }
    }

    fn universe(tickers: &[&str]) -> TickerUniverse {
        TickerUniverse::new(
            tickers
                .iter()
                .enumerate()
                .map(|(i, t)| UniverseEntry { ticker: t.to_string(), cik: (i + 1).to_string() })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn universe_rejects_duplicates_and_pads_cik() {
        let u = universe(&["aapl"]);
        assert_eq!(u.entries()[0].cik, "0000000001");
        assert_eq!(u.entries()[0].ticker, "AAPL");
        let dup = TickerUniverse::new(vec![
            UniverseEntry { ticker: "A".into(), cik: "1".into() },
            UniverseEntry { ticker: "a".into(), cik: "2".into() },
        ]);
        assert!(matches!(dup, Err(CorpusError::InvalidUniverse(_))));
        assert!(pad_cik("12345678901").is_none());
        assert!(pad_cik("12a").is_none());
    }

    #[test]
    fn empty_universe_resolves_to_nothing() {
        let (refs, warnings) =
            resolve_filing_urls(&TickerUniverse::default(), 2002, 2023, &MapResolver(vec![]))
                .unwrap();
        assert!(refs.is_empty());
        assert!(warnings.is_empty());
    }

    #[test]
    fn unknown_ticker_yields_one_warning() {
        let (refs, warnings) =
            resolve_filing_urls(&universe(&["GHOST"]), 2002, 2023, &MapResolver(vec![])).unwrap();
        assert!(refs.is_empty());
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].ticker, "GHOST");
    }

    #[test]
    fn one_filing_per_year_sorted_and_amendments_dropped() {
        let resolver = MapResolver(vec![
            fref("ZZZ", "2005-03-01", "10-K"),
            fref("AAPL", "2004-12-01", "10-K"),
            fref("AAPL", "2003-12-05", "10-K/A"),
            fref("AAPL", "2003-11-20", "10-K"),
            fref("AAPL", "2003-12-20", "10-K"),
            fref("AAPL", "2001-11-20", "10-K"),
        ]);
        let (refs, _) =
            resolve_filing_urls(&universe(&["ZZZ", "AAPL"]), 2002, 2023, &resolver).unwrap();
        let keys: Vec<String> = refs.iter().map(|r| r.key().to_string()).collect();
        assert_eq!(keys, ["AAPL@2003-11-20", "AAPL@2004-12-01", "ZZZ@2005-03-01"]);
    }

    #[test]
    fn inverted_year_range_is_rejected() {
        let err = resolve_filing_urls(&universe(&["A"]), 2010, 2009, &MapResolver(vec![]));
        assert!(matches!(err, Err(CorpusError::InvalidYearRange { .. })));
    }

    #[test]
    fn retriable_classification() {
        assert!(CorpusError::Http { status: 503, uri: String::new() }.is_retriable());
        assert!(CorpusError::Http { status: 429, uri: String::new() }.is_retriable());
        assert!(!CorpusError::Http { status: 404, uri: String::new() }.is_retriable());
        assert!(!CorpusError::EmptyDocument { uri: String::new() }.is_retriable());
    }
}
