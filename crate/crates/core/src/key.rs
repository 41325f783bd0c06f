use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// ISO-8601 calendar date format used by every file this crate writes.
pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Identifies one filing: a ticker and the date its annual report was filed.
///
/// Ordering is by ticker, then date, which is the canonical sort order of
/// every artifact in the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FilingKey {
    pub ticker: String,
    pub filing_date: NaiveDate,
}

impl FilingKey {
    pub fn new(ticker: impl Into<String>, filing_date: NaiveDate) -> Self {
        Self { ticker: ticker.into(), filing_date }
    }

    pub fn year(&self) -> i32 {
        use chrono::Datelike;
        self.filing_date.year()
    }
}

impl fmt::Display for FilingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.ticker, self.filing_date.format(DATE_FORMAT))
    }
}

pub(crate) fn parse_date(s: &str) -> Result<NaiveDate, chrono::ParseError> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
}
