use chrono::NaiveDate;

use super::{MarketDataError, PriceSeries};

/// Fewest in-window observations for which returns are computed.
pub const MIN_OBSERVATIONS: usize = 10;
/// Percentile of cumulative returns used as the robust window maximum.
pub const MAX_PERCENTILE: f64 = 98.0;
/// Percentile of cumulative returns used as the robust window minimum.
pub const MIN_PERCENTILE: f64 = 2.0;

/// Sorted, de-duplicated trading dates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(mut dates: Vec<NaiveDate>) -> Self {
        dates.sort();
        dates.dedup();
        Self { dates }
    }

    pub fn from_series(series: &PriceSeries) -> Self {
        Self::new(series.dates().collect())
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn last(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    /// The `n`-th trading day strictly after `date` (n ≥ 1).
    pub fn nth_after(&self, date: NaiveDate, n: usize) -> Option<NaiveDate> {
        let first = self.dates.partition_point(|d| *d <= date);
        self.dates.get(first + n - 1).copied()
    }

    /// The `n`-th trading day strictly before `date` (n ≥ 1).
    pub fn nth_before(&self, date: NaiveDate, n: usize) -> Option<NaiveDate> {
        let below = self.dates.partition_point(|d| *d < date);
        below.checked_sub(n).map(|i| self.dates[i])
    }
}

/// Return window for a filing: from the 2nd trading day after the filing to
/// the 2nd trading day before the next filing.
pub fn window_bounds(
    filing_date: NaiveDate,
    next_filing_date: NaiveDate,
    calendar: &TradingCalendar,
) -> Result<(NaiveDate, NaiveDate), MarketDataError> {
    if next_filing_date <= filing_date {
        return Err(MarketDataError::WindowOrder { filing: filing_date, next: next_filing_date });
    }
    let start = calendar
        .nth_after(filing_date, 2)
        .ok_or(MarketDataError::CalendarCoverage(filing_date))?;
    let end = calendar
        .nth_before(next_filing_date, 2)
        .ok_or(MarketDataError::CalendarCoverage(next_filing_date))?;
    if start >= end {
        return Err(MarketDataError::CollapsedWindow { start, end });
    }
    Ok((start, end))
}

/// Returns over one window, all as fractions of the base price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowReturns {
    pub r_12m: f64,
    pub r_max: f64,
    pub r_min: f64,
    pub r_q25: f64,
    pub r_q50: f64,
    pub r_q75: f64,
    /// Date of the base price (first observation on or after the start).
    pub base_date: NaiveDate,
    /// Date of the terminal price (last observation on or before the end).
    pub last_date: NaiveDate,
    pub observations: usize,
}

/// Linear-interpolation percentile (`p` in 0..=100) of unsorted `values`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * (p / 100.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cumulative-return statistics of `series` between `start` and `end`
/// inclusive. If the series stops before `end`, its last price is terminal.
pub fn window_returns(
    series: &PriceSeries,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<WindowReturns, MarketDataError> {
    let obs = series.observations();
    let from = obs.partition_point(|o| o.0 < start);
    let to = obs.partition_point(|o| o.0 <= end);
    let window = if from < to { &obs[from..to] } else { &[][..] };
    if window.len() < MIN_OBSERVATIONS {
        return Err(MarketDataError::InsufficientData {
            found: window.len(),
            needed: MIN_OBSERVATIONS,
        });
    }
    let p0 = window[0].1;
    let cumulative: Vec<f64> = window.iter().map(|&(_, p)| p / p0 - 1.0).collect();

    let span_days = (end - start).num_days() as f64;
    let at_fraction = |frac: f64| -> f64 {
        let target = frac * span_days;
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, (d, _)) in window.iter().enumerate() {
            let dist = ((*d - start).num_days() as f64 - target).abs();
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        cumulative[best]
    };

    Ok(WindowReturns {
        r_12m: *cumulative.last().unwrap(),
        r_max: percentile(&cumulative, MAX_PERCENTILE),
        r_min: percentile(&cumulative, MIN_PERCENTILE),
        r_q25: at_fraction(0.25),
        r_q50: at_fraction(0.50),
        r_q75: at_fraction(0.75),
        base_date: window[0].0,
        last_date: window[window.len() - 1].0,
        observations: window.len(),
    })
}
