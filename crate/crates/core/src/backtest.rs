//! Walk-forward evaluation: per-year top-k picks, mean returns and
//! compounded wealth against the benchmark.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::labeling::SourceField as ReturnBasis;
use crate::llm_scoring::FeatureTable;
use crate::market_data::ReturnRecord;
use crate::regression::{NnlsModel, RegressionError};
use crate::FilingKey;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("invalid year range {0}")]
    InvalidYears(String),
    #[error("train years {train} must end before test years {test} begin")]
    Split { train: YearRange, test: YearRange },
    #[error("model was trained on {trained} which overlaps test years {test}")]
    LookAhead { trained: YearRange, test: YearRange },
    #[error("invalid k: {0}")]
    InvalidK(String),
    #[error("no test year produced any picks")]
    NoYears,
    #[error(transparent)]
    Model(#[from] RegressionError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Result<Self, BacktestError> {
        if start > end {
            return Err(BacktestError::InvalidYears(format!("{start}-{end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &YearRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

impl FromStr for YearRange {
    type Err = BacktestError;
    /// Accepts `2018-2023` or a single year.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BacktestError::InvalidYears(s.to_string());
        let (a, b) = s.split_once('-').unwrap_or((s, s));
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        Self::new(start, end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_years: YearRange,
    pub test_years: YearRange,
}

impl SplitSpec {
    pub fn new(train_years: YearRange, test_years: YearRange) -> Result<Self, BacktestError> {
        if train_years.end >= test_years.start {
            return Err(BacktestError::Split { train: train_years, test: test_years });
        }
        Ok(Self { train_years, test_years })
    }
}

/// Portfolio size: an absolute count or a percentage of the year's
/// candidates (rounded up, at least one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KSpec {
    Absolute(usize),
    Percent(f64),
}

impl KSpec {
    pub fn resolve(&self, candidates: usize) -> usize {
        match *self {
            KSpec::Absolute(k) => k,
            KSpec::Percent(p) => ((candidates as f64 * p / 100.0).ceil() as usize).max(1),
        }
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Absolute(k) => write!(f, "{k}"),
            KSpec::Percent(p) => write!(f, "{p}%"),
        }
    }
}

impl FromStr for KSpec {
    type Err = BacktestError;
    /// `5` is an absolute count, `5%` a percentage.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BacktestError::InvalidK(s.to_string());
        let k = match s.trim().strip_suffix('%') {
            Some(p) => {
                let p: f64 = p.trim().parse().map_err(|_| bad())?;
                if !(p > 0.0 && p <= 100.0) {
                    return Err(bad());
                }
                KSpec::Percent(p)
            }
            None => match s.trim().parse::<usize>() {
                Ok(k) if k >= 1 => KSpec::Absolute(k),
                _ => return Err(bad()),
            },
        };
        Ok(k)
    }
}

/// The `k` highest-scoring tickers, ties broken by ticker ascending.
pub fn select_top_k(predictions: &[(String, f64)], k: usize) -> Vec<String> {
    let mut ranked: Vec<&(String, f64)> = predictions.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(t, _)| t.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub ticker: String,
    pub filing_date: NaiveDate,
    pub prediction: f64,
    pub strategy_return: f64,
    pub benchmark_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearResult {
    pub year: i32,
    pub candidates: usize,
    pub k: usize,
    pub picks: Vec<Pick>,
    /// Higher-ranked tickers passed over because they had no return record.
    pub skipped_missing_returns: Vec<String>,
    pub mean_strategy_return: f64,
    pub mean_benchmark_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthPoint {
    pub year: i32,
    pub strategy_wealth: f64,
    pub benchmark_wealth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub k: KSpec,
    pub return_basis: ReturnBasis,
    pub split: SplitSpec,
    pub per_year: Vec<YearResult>,
    /// Starts at 1.0 in the year before the first evaluated year; one point
    /// per evaluated year after that.
    pub cumulative: Vec<WealthPoint>,
    pub omitted_years: Vec<i32>,
    pub mean_strategy_return: f64,
    pub mean_benchmark_return: f64,
}

impl BacktestReport {
    pub fn final_strategy_wealth(&self) -> f64 {
        self.cumulative.last().map_or(1.0, |w| w.strategy_wealth)
    }

    pub fn final_benchmark_wealth(&self) -> f64 {
        self.cumulative.last().map_or(1.0, |w| w.benchmark_wealth)
    }

    pub fn to_json(&self) -> Result<String, BacktestError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_json(&self, path: &Path) -> Result<(), BacktestError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn write_cumulative_csv(&self, path: &Path) -> Result<(), BacktestError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["year", "strategy_wealth", "benchmark_wealth"])?;
        for p in &self.cumulative {
            w.write_record([p.year.to_string(), p.strategy_wealth.to_string(), p.benchmark_wealth.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Wealth after compounding each return onto a starting value of 1.
pub fn compound(returns: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len() + 1);
    let mut w = 1.0;
    out.push(w);
    for r in returns {
        w *= 1.0 + r;
        out.push(w);
    }
    out
}

/// Evaluates the model on the test years of `split`.
///
/// Each year every scored filing is predicted and ranked. The top `k` with
/// a return record are bought in equal weight; ranked filings without one
/// are skipped and the next-ranked filing takes their place. Years with no
/// picks are omitted from the wealth series.
pub fn run_backtest(
    model: &NnlsModel,
    features: &FeatureTable,
    returns: &[ReturnRecord],
    split: &SplitSpec,
    k: KSpec,
    basis: ReturnBasis,
) -> Result<BacktestReport, BacktestError> {
    let predictions = predict_test_years(model, features, split)?;
    evaluate(&predictions, returns, split, k, basis)
}

fn predict_test_years(
    model: &NnlsModel,
    features: &FeatureTable,
    split: &SplitSpec,
) -> Result<BTreeMap<i32, Vec<(FilingKey, f64)>>, BacktestError> {
    if let Some(trained) = model.train_years {
        if trained.overlaps(&split.test_years) {
            return Err(BacktestError::LookAhead { trained, test: split.test_years });
        }
    }
    let mut by_year: BTreeMap<i32, Vec<(FilingKey, f64)>> = BTreeMap::new();
    for (key, score) in model.predict_table(features)? {
        if split.test_years.contains(key.year()) {
            by_year.entry(key.year()).or_default().push((key, score));
        }
    }
    Ok(by_year)
}

fn evaluate(
    predictions: &BTreeMap<i32, Vec<(FilingKey, f64)>>,
    returns: &[ReturnRecord],
    split: &SplitSpec,
    k: KSpec,
    basis: ReturnBasis,
) -> Result<BacktestReport, BacktestError> {
    let by_key: HashMap<FilingKey, &ReturnRecord> = returns.iter().map(|r| (r.key(), r)).collect();
    let mut per_year = Vec::new();
    let mut omitted_years = Vec::new();
    for year in split.test_years.years() {
        let Some(rows) = predictions.get(&year).filter(|r| !r.is_empty()) else {
            log::warn!("test year {year} has no scored filings; omitted");
            omitted_years.push(year);
            continue;
        };
        let mut ranked: Vec<&(FilingKey, f64)> = rows.iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let k_year = k.resolve(ranked.len());
        let mut picks = Vec::with_capacity(k_year);
        let mut skipped = Vec::new();
        for (key, score) in ranked {
            if picks.len() == k_year {
                break;
            }
            match by_key.get(key) {
                Some(r) => picks.push(Pick {
                    ticker: key.ticker.clone(),
                    filing_date: key.filing_date,
                    prediction: *score,
                    strategy_return: basis.value(r),
                    benchmark_return: basis.benchmark_value(r),
                }),
                None => {
                    log::info!("{key} has no return record; taking the next-ranked filing");
                    skipped.push(key.ticker.clone());
                }
            }
        }
        if picks.is_empty() {
            log::warn!("test year {year} has no picks with returns; omitted");
            omitted_years.push(year);
            continue;
        }
        let n = picks.len() as f64;
        per_year.push(YearResult {
            year,
            candidates: rows.len(),
            k: k_year,
            mean_strategy_return: picks.iter().map(|p| p.strategy_return).sum::<f64>() / n,
            mean_benchmark_return: picks.iter().map(|p| p.benchmark_return).sum::<f64>() / n,
            picks,
            skipped_missing_returns: skipped,
        });
    }
    if per_year.is_empty() {
        return Err(BacktestError::NoYears);
    }

    let strategy = compound(&per_year.iter().map(|y| y.mean_strategy_return).collect::<Vec<_>>());
    let benchmark = compound(&per_year.iter().map(|y| y.mean_benchmark_return).collect::<Vec<_>>());
    let years = std::iter::once(per_year[0].year - 1).chain(per_year.iter().map(|y| y.year));
    let cumulative = years
        .zip(strategy.iter().zip(&benchmark))
        .map(|(year, (&s, &b))| WealthPoint { year, strategy_wealth: s, benchmark_wealth: b })
        .collect();
    let n = per_year.len() as f64;
    Ok(BacktestReport {
        k,
        return_basis: basis,
        split: *split,
        mean_strategy_return: per_year.iter().map(|y| y.mean_strategy_return).sum::<f64>() / n,
        mean_benchmark_return: per_year.iter().map(|y| y.mean_benchmark_return).sum::<f64>() / n,
        per_year,
        cumulative,
        omitted_years,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: KSpec,
    pub mean_strategy_return: f64,
    pub mean_benchmark_return: f64,
    pub final_strategy_wealth: f64,
    pub final_benchmark_wealth: f64,
}

/// One backtest summary per k. Means are averaged over evaluated years.
pub fn k_sweep(
    model: &NnlsModel,
    features: &FeatureTable,
    returns: &[ReturnRecord],
    split: &SplitSpec,
    ks: &[KSpec],
    basis: ReturnBasis,
) -> Result<Vec<KSweepRow>, BacktestError> {
    if ks.is_empty() {
        return Err(BacktestError::InvalidK("empty k list".into()));
    }
    let predictions = predict_test_years(model, features, split)?;
    ks.iter()
        .map(|&k| {
            let r = evaluate(&predictions, returns, split, k, basis)?;
            Ok(KSweepRow {
                k,
                mean_strategy_return: r.mean_strategy_return,
                mean_benchmark_return: r.mean_benchmark_return,
                final_strategy_wealth: r.final_strategy_wealth(),
                final_benchmark_wealth: r.final_benchmark_wealth(),
            })
        })
        .collect()
}

pub fn write_ksweep_csv(path: &Path, rows: &[KSweepRow]) -> Result<(), BacktestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "k",
        "mean_strategy_return",
        "mean_benchmark_return",
        "final_strategy_wealth",
        "final_benchmark_wealth",
    ])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.mean_strategy_return.to_string(),
            r.mean_benchmark_return.to_string(),
            r.final_strategy_wealth.to_string(),
            r.final_benchmark_wealth.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A seeded sample of at most `n` keys, returned in sorted order.
pub fn sample_keys(keys: &[FilingKey], n: usize, seed: u64) -> Vec<FilingKey> {
    let mut sorted = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    if n >= sorted.len() {
        return sorted;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, sorted.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| sorted[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_scoring::FeatureRow;
    use crate::regression::{FeatureScaling, ScalingMode};

    fn d(y: i32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, 3, 1).unwrap()
    }

    fn identity_model() -> NnlsModel {
        NnlsModel {
            feature_names: vec!["q_a".into()],
            coefficients: vec![1.0],
            intercept: 0.0,
            scaling_mode: ScalingMode::Identity,
            scaling: vec![FeatureScaling { shift: 0.0, scale: 1.0 }],
            train_years: Some(YearRange::new(2016, 2017).unwrap()),
            excluded: vec![],
            converged: true,
        }
    }

    fn table(rows: &[(&str, i32, u8)]) -> FeatureTable {
        let mut t = FeatureTable::new(vec!["a".into()]);
        for &(ticker, year, s) in rows {
            t.rows.push(FeatureRow { filing_key: FilingKey::new(ticker, d(year)), scores: vec![s] });
        }
        t
    }

    fn ret(ticker: &str, year: i32, r: f64, b: f64) -> ReturnRecord {
        ReturnRecord {
            ticker: ticker.into(),
            filing_date: d(year),
            next_filing_date: None,
            target_12m: r,
            target_max: r * 2.0,
            target_min: 0.0,
            target_q25: 0.0,
            target_q50: 0.0,
            target_q75: 0.0,
            sp500_12m: b,
            sp500_max: b * 2.0,
            flags: vec![],
            window: None,
        }
    }

    fn split(a: i32, b: i32) -> SplitSpec {
        SplitSpec::new(YearRange::new(2016, 2017).unwrap(), YearRange::new(a, b).unwrap()).unwrap()
    }

    #[test]
    fn top_k_order_and_ties() {
        let p = vec![("A".to_string(), 0.9), ("B".to_string(), 0.8), ("C".to_string(), 0.7)];
        assert_eq!(select_top_k(&p, 2), vec!["A", "B"]);
        assert_eq!(select_top_k(&[("B".into(), 0.5), ("A".into(), 0.5)], 1), vec!["A"]);
        assert_eq!(select_top_k(&p, 10).len(), 3);
    }

    #[test]
    fn one_step_compounding() {
        let r = run_backtest(
            &identity_model(),
            &table(&[("A", 2018, 90), ("B", 2018, 10)]),
            &[ret("A", 2018, 0.10, 0.04), ret("B", 2018, -0.5, 0.04)],
            &split(2018, 2018),
            KSpec::Absolute(1),
            ReturnBasis::Target12m,
        )
        .unwrap();
        assert_eq!(r.cumulative.len(), 2);
        assert_eq!(r.cumulative[0].strategy_wealth, 1.0);
        assert_eq!(r.final_strategy_wealth(), 1.10);
        assert_eq!(r.final_benchmark_wealth(), 1.04);
        assert_eq!(r.cumulative[0].year, 2017);
    }

    #[test]
    fn two_year_compounding_is_exact() {
        assert_eq!(compound(&[0.1, 0.2]), vec![1.0, 1.1, 1.32]);
    }

    #[test]
    fn missing_returns_are_backfilled() {
        let r = run_backtest(
            &identity_model(),
            &table(&[("A", 2018, 90), ("B", 2018, 80), ("C", 2018, 70)]),
            &[ret("B", 2018, 0.2, 0.0), ret("C", 2018, 0.4, 0.0)],
            &split(2018, 2018),
            KSpec::Absolute(2),
            ReturnBasis::Target12m,
        )
        .unwrap();
        let y = &r.per_year[0];
        assert_eq!(y.picks.iter().map(|p| p.ticker.as_str()).collect::<Vec<_>>(), vec!["B", "C"]);
        assert_eq!(y.skipped_missing_returns, vec!["A"]);
        assert!((y.mean_strategy_return - 0.3).abs() < 1e-15);
    }

    #[test]
    fn empty_year_is_omitted_and_series_shrinks() {
        let r = run_backtest(
            &identity_model(),
            &table(&[("A", 2018, 90), ("A", 2020, 90)]),
            &[ret("A", 2018, 0.1, 0.0), ret("A", 2020, 0.2, 0.0)],
            &split(2018, 2020),
            KSpec::Absolute(1),
            ReturnBasis::Target12m,
        )
        .unwrap();
        assert_eq!(r.omitted_years, vec![2019]);
        assert_eq!(r.cumulative.len(), 3);
        assert!((r.final_strategy_wealth() - 1.32).abs() < 1e-15);
    }

    #[test]
    fn max_basis_uses_max_fields() {
        let r = run_backtest(
            &identity_model(),
            &table(&[("A", 2018, 1)]),
            &[ret("A", 2018, 0.1, 0.05)],
            &split(2018, 2018),
            KSpec::Absolute(5),
            ReturnBasis::TargetMax,
        )
        .unwrap();
        assert_eq!(r.per_year[0].mean_strategy_return, 0.2);
        assert_eq!(r.per_year[0].mean_benchmark_return, 0.1);
    }

    #[test]
    fn look_ahead_is_rejected() {
        let mut model = identity_model();
        model.train_years = Some(YearRange::new(2016, 2018).unwrap());
        let err = run_backtest(
            &model,
            &table(&[("A", 2018, 1)]),
            &[],
            &split(2018, 2018),
            KSpec::Absolute(1),
            ReturnBasis::Target12m,
        )
        .unwrap_err();
        assert!(matches!(err, BacktestError::LookAhead { .. }));
    }

    #[test]
    fn k_sweep_limits() {
        let feats = table(&[("A", 2018, 90), ("B", 2018, 50), ("C", 2018, 10)]);
        let rets = [ret("A", 2018, 0.3, 0.1), ret("B", 2018, 0.2, 0.1), ret("C", 2018, 0.1, 0.1)];
        let rows = k_sweep(
            &identity_model(),
            &feats,
            &rets,
            &split(2018, 2018),
            &[KSpec::Absolute(1), KSpec::Absolute(3)],
            ReturnBasis::Target12m,
        )
        .unwrap();
        assert_eq!(rows[0].mean_strategy_return, 0.3);
        assert!((rows[1].mean_strategy_return - 0.2).abs() < 1e-15);
    }

    #[test]
    fn parsing() {
        assert_eq!("2018-2023".parse::<YearRange>().unwrap(), YearRange { start: 2018, end: 2023 });
        assert_eq!("2019".parse::<YearRange>().unwrap(), YearRange { start: 2019, end: 2019 });
        assert!("2020-2019".parse::<YearRange>().is_err());
        assert_eq!("5".parse::<KSpec>().unwrap(), KSpec::Absolute(5));
        assert_eq!("5%".parse::<KSpec>().unwrap(), KSpec::Percent(5.0));
        assert!("0".parse::<KSpec>().is_err());
        assert_eq!(KSpec::Percent(5.0).resolve(100), 5);
        assert_eq!(KSpec::Percent(5.0).resolve(3), 1);
        assert!(SplitSpec::new(YearRange::new(2016, 2018).unwrap(), YearRange::new(2018, 2019).unwrap()).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_sorted() {
        let keys: Vec<FilingKey> = (0..50).map(|i| FilingKey::new(format!("T{i:02}"), d(2018))).collect();
        let a = sample_keys(&keys, 10, 7);
        assert_eq!(a, sample_keys(&keys, 10, 7));
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_ne!(a, sample_keys(&keys, 10, 8));
        assert_eq!(sample_keys(&keys, 100, 7).len(), 50);
    }
}
