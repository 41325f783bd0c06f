//! Synthetic fixture universe with a planted signal.
//!
//! Each (ticker, year) filing gets a quality tier from a seeded shuffle. The
//! filing text carries one phrase tied to its tier, the keyword rules map
//! that phrase to a score, and the stock's drift until its next filing rises
//! with the tier. A model that learns "higher score, higher return" therefore
//! beats the benchmark, and smaller portfolios beat larger ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const TICKERS: [&str; 8] = ["ALFA", "BRVO", "CHRL", "DLTA", "ECHO", "FXTR", "GOLF", "HTLX"];
pub const BENCHMARK: &str = "SPX";

/// Phrase planted in a filing of tier `i`, and the score the keyword stub
/// gives it.
pub const TIER_PHRASES: [(&str, u8); 8] = [
    ("substantial doubt about our ability to continue as a going concern", 5),
    ("we recorded significant impairment and restructuring charges", 15),
    ("revenue declined across most of our segments", 30),
    ("results were broadly in line with the prior year", 45),
    ("we saw a modest improvement in operating margins", 55),
    ("we expanded into two new regional markets", 70),
    ("strong demand drove double-digit revenue growth", 85),
    ("record revenue and accelerating growth across every segment", 95),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { first_year: 2016, last_year: 2019, seed: 7 }
    }
}

fn next_weekday(mut d: NaiveDate) -> NaiveDate {
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d += Duration::days(1);
    }
    d
}

/// Filing date of ticker number `i` in `year`.
pub fn filing_date(i: usize, year: i32) -> NaiveDate {
    next_weekday(NaiveDate::from_ymd_opt(year, 3, 1 + 2 * i as u32).expect("valid March date"))
}

/// Tier of every (ticker, year): a fresh permutation of 0..8 each year.
pub fn planted_tiers(spec: &SynthSpec) -> BTreeMap<(String, i32), usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = BTreeMap::new();
    for year in spec.first_year..=spec.last_year {
        let mut tiers: Vec<usize> = (0..TICKERS.len()).collect();
        tiers.shuffle(&mut rng);
        for (t, tier) in TICKERS.iter().zip(tiers) {
            out.insert((t.to_string(), year), tier);
        }
    }
    out
}

fn trading_days(spec: &SynthSpec) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(spec.first_year, 1, 4).expect("valid date");
    let end = NaiveDate::from_ymd_opt(spec.last_year + 1, 6, 30).expect("valid date");
    let mut out = Vec::new();
    while d <= end {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

const BASE_DRIFT: f64 = 0.0002;
const TIER_DRIFT: f64 = 0.0003;
const NOISE: f64 = 0.0008;
const WAVE: f64 = 0.005;

fn filing_html(ticker: &str, date: NaiveDate, tier: usize) -> String {
    let phrase = TIER_PHRASES[tier].0;
    let fy = date.year() - 1;
    format!(
        r#"<!DOCTYPE html>
<html>
<head><title>{ticker} 10-K</title><style>p {{ margin: 0 }}</style></head>
<body>
<div style="display:none"><ix:header><ix:hidden>{ticker}-hidden-dei-data</ix:hidden></ix:header></div>
<p align="center"><b>UNITED STATES SECURITIES AND EXCHANGE COMMISSION</b></p>
<p align="center">FORM 10-K &#8212; Annual report for the fiscal year ended December&nbsp;31, {fy}</p>
<p>{ticker} Holdings Corp. (the &ldquo;Company&rdquo;) files this report on {date}.</p>
<h2>Item 1. Business</h2>
<p>The Company designs, manufactures and sells industrial components to customers in North America and Europe.
Our products are sold through direct sales teams &amp; a network of independent distributors.</p>
<h2>Item 1A. Risk Factors</h2>
<p>Our business is exposed to changes in customer demand, input costs, interest rates and currency movements.
A prolonged economic slowdown could reduce orders from our largest customers.</p>
<h2>Item 7. Management&#8217;s Discussion and Analysis</h2>
<p>During fiscal {fy}, {phrase}.
Management will continue to allocate capital between reinvestment in the business and returns to shareholders.</p>
<table>
<tr><th>Metric</th><th>FY{fy}</th></tr>
<tr><td>Employees</td><td>1,200</td></tr>
</table>
<h2>Item 8. Financial Statements</h2>
<p>The consolidated financial statements are presented in accordance with generally accepted accounting principles.</p>
</body>
</html>
"#
    )
}

/// Writes the fixture into `dir`: universe, filings, keyword rules,
/// question set, prices and a pipeline config.
pub fn write_fixture(dir: &Path, spec: &SynthSpec) -> io::Result<()> {
    let tiers = planted_tiers(spec);
    fs::create_dir_all(dir.join("filings"))?;
    fs::create_dir_all(dir.join("prices"))?;

    let mut universe = String::from("ticker,cik\n");
    for (i, t) in TICKERS.iter().enumerate() {
        writeln!(universe, "{t},{}", 9_000_001 + i).expect("write to string");
    }
    fs::write(dir.join("universe.csv"), universe)?;

    for (i, t) in TICKERS.iter().enumerate() {
        for year in spec.first_year..=spec.last_year {
            let date = filing_date(i, year);
            let html = filing_html(t, date, tiers[&(t.to_string(), year)]);
            fs::write(dir.join("filings").join(format!("{t}_{date}.html")), html)?;
        }
    }

    let rules: Vec<_> =
        TIER_PHRASES.iter().rev().map(|(p, s)| json!({"phrase": p, "score": s})).collect();
    let rules = json!({"rules": rules, "default": 50});
    fs::write(dir.join("keyword_rules.json"), serde_json::to_string_pretty(&rules)? + "\n")?;

    let questions = json!({
        "version": "fixture-v1",
        "questions": [
            {"id": "growth_strategy", "text": "Does the company have a clear strategy for growth that is likely to increase revenue?"},
            {"id": "revenue_trend", "text": "Is revenue growing, and is that growth likely to continue?"},
            {"id": "going_concern", "text": "Is the company free of doubts about its ability to continue operating?"},
            {"id": "management_tone", "text": "Is management's discussion of results confident and positive?"}
        ]
    });
    fs::write(dir.join("questions.json"), serde_json::to_string_pretty(&questions)? + "\n")?;

    let days = trading_days(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut bench = String::from("symbol,date,adjusted_close\n");
    let mut level = 2000.0_f64.ln();
    for d in &days {
        level += 0.0003 + rng.random_range(-0.0005..0.0005);
        writeln!(bench, "{BENCHMARK},{d},{:.6}", level.exp()).expect("write to string");
    }
    fs::write(dir.join("prices").join(format!("{BENCHMARK}.csv")), bench)?;

    for (i, t) in TICKERS.iter().enumerate() {
        let mut csv = String::from("symbol,date,adjusted_close\n");
        let mut trend = (20.0 + 5.0 * i as f64).ln();
        let phase = i as f64;
        for (n, d) in days.iter().enumerate() {
            let tier = (spec.first_year..=spec.last_year)
                .rev()
                .find(|&y| filing_date(i, y) <= *d)
                .map(|y| tiers[&(t.to_string(), y)]);
            let drift = match tier {
                Some(tier) => BASE_DRIFT + (tier as f64 - 3.5) * TIER_DRIFT,
                None => BASE_DRIFT,
            };
            trend += drift + rng.random_range(-NOISE..NOISE);
            let wave = WAVE * (n as f64 * std::f64::consts::TAU / 63.0 + phase).sin();
            writeln!(csv, "{t},{d},{:.6}", (trend + wave).exp()).expect("write to string");
        }
        fs::write(dir.join("prices").join(format!("{t}.csv")), csv)?;
    }

    let config = format!(
        r#"# Synthetic universe: {n} tickers, filings {fy}-{ly}.
out_dir = "out"
seed = {seed}

[ingest]
universe = "universe.csv"
years = "{fy}-{ly}"
source = {{ kind = "local", dir = "filings" }}

[embedding]
provider = {{ kind = "hash_stub", dim = 64 }}
chunk_chars = 1024
overlap_chars = 128

[llm]
provider = {{ kind = "keyword", rules = "keyword_rules.json" }}
questions = "questions.json"
chunks_per_question = 4
max_in_flight = 4

[returns]
price_dir = "prices"
benchmark = "{BENCHMARK}"

[label]
target = "12m"
bins = 5

[split]
train_years = "{fy}-{tr}"
test_years = "{ts}-{ly}"

[backtest]
k = "2"
k_sweep = ["1", "2", "4", "8"]
basis = "12m"
"#,
        n = TICKERS.len(),
        fy = spec.first_year,
        ly = spec.last_year,
        seed = spec.seed,
        tr = spec.first_year + 1,
        ts = spec.first_year + 2,
    );
    fs::write(dir.join("pipeline.toml"), config)?;
    Ok(())
}
