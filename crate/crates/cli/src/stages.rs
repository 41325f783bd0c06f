//! One function per pipeline stage. Each takes explicit paths, checks its
//! inputs, writes its artifacts and returns per-item warnings that did not
//! stop the stage.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use arsignal::backtest::{
    k_sweep, run_backtest, sample_keys, write_ksweep_csv, KSpec, ReturnBasis, SplitSpec, YearRange,
};
use arsignal::corpus::{
    ingest, CorpusStore, EdgarClient, LocalDirResolver, TickerUniverse, UriFetcher,
    MANIFEST_FILE,
};
use arsignal::embed_index::{
    index_filings, EmbeddingProvider, HashStubProvider, HttpEmbeddingProvider, VectorIndex,
    SIDECAR_FILE, VECTORS_FILE,
};
use arsignal::labeling::{make_labels, read_labels_csv, write_labels_csv, SourceField};
use arsignal::llm_scoring::{
    score_filings, ConstantStub, FeatureTable, HttpChatProvider, KeywordStub, LlmProvider,
    QuestionSet, ScoreCache, ScoringOptions,
};
use arsignal::market_data::{
    compute_return_records, load_price_dir, read_returns_csv, write_returns_csv,
};
use arsignal::regression::{fit_nnls, DesignMatrix, NnlsModel};
use arsignal::FilingKey;

use crate::config::{EmbeddingProviderConfig, FilingSource, LlmConfig, LlmProviderConfig};
use crate::CliError;

pub type Warnings = Vec<String>;

fn require_artifact(path: &Path, producer: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing_artifact(path, producer))
    }
}

fn require_corpus(corpus_dir: &Path) -> Result<(), CliError> {
    require_artifact(&corpus_dir.join(MANIFEST_FILE), "ingest")
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn api_key(var: &Option<String>) -> Option<String> {
    var.as_deref().and_then(|v| std::env::var(v).ok())
}

pub fn build_embedder(
    cfg: &EmbeddingProviderConfig,
    seed: u64,
) -> Box<dyn EmbeddingProvider + Send + Sync> {
    match cfg {
        EmbeddingProviderConfig::HashStub { dim } => Box::new(HashStubProvider::new(*dim, seed)),
        EmbeddingProviderConfig::Http { endpoint, model, dim, api_key_env } => Box::new(
            HttpEmbeddingProvider::new(endpoint, model, *dim, api_key(api_key_env).as_deref()),
        ),
    }
}

pub fn build_llm(cfg: &LlmProviderConfig) -> Result<Box<dyn LlmProvider>, CliError> {
    Ok(match cfg {
        LlmProviderConfig::Constant { score } => {
            if *score > 100 {
                return Err(CliError::Config(format!("constant score {score} above 100")));
            }
            Box::new(ConstantStub { score: *score })
        }
        LlmProviderConfig::Keyword { rules } => {
            if !rules.exists() {
                return Err(CliError::missing_user_input(rules, "a keyword rules JSON file"));
            }
            Box::new(KeywordStub::from_file(rules)?)
        }
        LlmProviderConfig::Http { endpoint, model, api_key_env, requests_per_minute } => Box::new(
            HttpChatProvider::new(endpoint, model, api_key(api_key_env).as_deref(), *requests_per_minute),
        ),
    })
}

/// Resolves and stores every filing of the universe in `years`.
pub fn run_ingest(
    universe: &Path,
    source: &FilingSource,
    years: YearRange,
    corpus_dir: &Path,
) -> Result<Warnings, CliError> {
    if !universe.exists() {
        return Err(CliError::missing_user_input(universe, "a ticker,cik CSV"));
    }
    let universe = TickerUniverse::from_csv(universe)?;
    let mut store = CorpusStore::open(corpus_dir)?;
    let outcome = match source {
        FilingSource::Local { dir } => {
            if !dir.is_dir() {
                return Err(CliError::missing_user_input(dir, "a directory of filings"));
            }
            let resolver = LocalDirResolver::new(dir);
            ingest(&universe, years.start, years.end, &resolver, &UriFetcher::local_only(), &mut store)?
        }
        FilingSource::Edgar => {
            // one client for both roles so they share the rate limit
            let client = EdgarClient::from_env()?;
            ingest(&universe, years.start, years.end, &client, &client, &mut store)?
        }
    };
    log::info!(
        "ingest: {} stored, {} already present, {} warnings",
        outcome.stored,
        outcome.skipped_existing,
        outcome.warnings.len()
    );
    Ok(outcome
        .warnings
        .iter()
        .map(|w| match w.filing_date {
            Some(d) => format!("{}@{d}: {}", w.ticker, w.message),
            None => format!("{}: {}", w.ticker, w.message),
        })
        .collect())
}

/// Chunks and embeds the whole corpus into a fresh index.
pub fn run_embed(
    corpus_dir: &Path,
    index_dir: &Path,
    embedder: &dyn EmbeddingProvider,
    chunk_chars: usize,
    overlap_chars: usize,
    batch_size: usize,
) -> Result<Warnings, CliError> {
    require_corpus(corpus_dir)?;
    let filings = CorpusStore::open(corpus_dir)?.load_all()?;
    let index = index_filings(&filings, embedder, chunk_chars, overlap_chars, batch_size)?;
    if index_dir.exists() {
        fs::remove_dir_all(index_dir)?;
    }
    index.save(index_dir)?;
    log::info!("embed: {} chunks from {} filings", index.len(), filings.len());
    Ok(Vec::new())
}

/// Scores every stored filing and writes `features.csv`.
pub fn run_score(
    corpus_dir: &Path,
    index_dir: &Path,
    embedder: &(dyn EmbeddingProvider + Sync),
    llm_cfg: &LlmConfig,
    features_out: &Path,
    cache_path: Option<&Path>,
) -> Result<Warnings, CliError> {
    require_corpus(corpus_dir)?;
    require_artifact(&index_dir.join(VECTORS_FILE), "embed")?;
    require_artifact(&index_dir.join(SIDECAR_FILE), "embed")?;
    let qs = match &llm_cfg.questions {
        Some(p) if !p.exists() => return Err(CliError::missing_user_input(p, "a question set JSON file")),
        Some(p) => QuestionSet::from_file(p)?,
        None => QuestionSet::default_set(),
    };
    let llm = build_llm(&llm_cfg.provider)?;
    let filings = CorpusStore::open(corpus_dir)?.load_all()?;
    let index = VectorIndex::load(index_dir)?;
    let cache = match cache_path {
        Some(p) => ScoreCache::open(p)?,
        None => ScoreCache::in_memory(),
    };
    let opts = ScoringOptions {
        chunks_per_question: llm_cfg.chunks_per_question,
        max_attempts: llm_cfg.max_attempts,
        max_in_flight: llm_cfg.max_in_flight,
    };
    let (table, failures) = score_filings(&filings, &qs, &index, embedder, llm.as_ref(), &cache, &opts)?;
    ensure_parent(features_out)?;
    table.write_csv(features_out)?;
    log::info!("score: {} rows, {} failed filings", table.rows.len(), failures.len());
    Ok(failures
        .iter()
        .map(|f| match &f.question_id {
            Some(q) => format!("{}@{} [{q}]: {}", f.ticker, f.filing_date, f.message),
            None => format!("{}@{}: {}", f.ticker, f.filing_date, f.message),
        })
        .collect())
}

/// Computes stock and benchmark returns for every stored filing.
pub fn run_returns(
    corpus_dir: &Path,
    price_dir: &Path,
    benchmark: &str,
    out: &Path,
) -> Result<Warnings, CliError> {
    require_corpus(corpus_dir)?;
    if !price_dir.is_dir() {
        return Err(CliError::missing_user_input(price_dir, "a directory of price CSV files"));
    }
    let keys: Vec<FilingKey> = CorpusStore::open(corpus_dir)?.records().map(|r| r.key()).collect();
    let prices = load_price_dir(price_dir)?;
    let bench_symbol = benchmark.to_ascii_uppercase();
    let bench = prices.get(&bench_symbol).ok_or_else(|| {
        CliError::Invalid(format!("benchmark {bench_symbol} not found in {}", price_dir.display()))
    })?;
    let (records, warnings) = compute_return_records(&keys, &prices, bench);
    ensure_parent(out)?;
    write_returns_csv(out, &records)?;
    log::info!("returns: {} records, {} warnings", records.len(), warnings.len());
    Ok(warnings.iter().map(|w| format!("{}@{}: {}", w.ticker, w.filing_date, w.message)).collect())
}

pub fn run_label(returns: &Path, target: SourceField, bins: usize, out: &Path) -> Result<Warnings, CliError> {
    require_artifact(returns, "returns")?;
    let records = read_returns_csv(returns)?;
    let labels = make_labels(&records, target, bins)?;
    ensure_parent(out)?;
    write_labels_csv(out, &labels)?;
    log::info!("label: {} labels", labels.len());
    Ok(Vec::new())
}

/// Keys of `keys` restricted to `years`, optionally down-sampled.
fn select_rows(keys: impl Iterator<Item = FilingKey>, years: YearRange, sample: Option<usize>, seed: u64) -> BTreeSet<FilingKey> {
    let in_years: Vec<FilingKey> = keys.filter(|k| years.contains(k.year())).collect();
    match sample {
        Some(n) => sample_keys(&in_years, n, seed).into_iter().collect(),
        None => in_years.into_iter().collect(),
    }
}

/// Fits the model on labeled rows whose filing year is in `train_years`.
pub fn run_train(
    features: &Path,
    labels: &Path,
    train_years: YearRange,
    sample: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<Warnings, CliError> {
    require_artifact(features, "score")?;
    require_artifact(labels, "label")?;
    let table = FeatureTable::read_csv(features)?;
    let labels = read_labels_csv(labels, SourceField::Target12m)?;
    let keep = select_rows(labels.iter().map(|l| l.key()), train_years, sample, seed);
    let (design, unmatched) = DesignMatrix::from_features(&table, &labels, |k| keep.contains(k))?;
    let mut model = fit_nnls(&design)?;
    model.train_years = Some(train_years);
    ensure_parent(out)?;
    model.save(out)?;
    log::info!("train: {} rows, {} features", design.nrows(), design.ncols());
    let mut warnings = Vec::new();
    if unmatched > 0 {
        warnings.push(format!("{unmatched} training labels have no feature row"));
    }
    warnings.extend(model.excluded.iter().map(|f| format!("feature {f} has zero variance; excluded")));
    Ok(warnings)
}

pub struct BacktestOutputs<'a> {
    pub report: &'a Path,
    pub cumulative: &'a Path,
    pub ksweep: &'a Path,
}

/// Evaluates the model on the test years and writes the report, the wealth
/// series and the k-sweep table. With `labels`, candidates are limited to
/// labeled filings.
#[allow(clippy::too_many_arguments)]
pub fn run_backtest_stage(
    model: &Path,
    features: &Path,
    returns: &Path,
    labels: Option<&Path>,
    split: &SplitSpec,
    k: KSpec,
    sweep: &[KSpec],
    basis: ReturnBasis,
    test_sample: Option<usize>,
    seed: u64,
    out: BacktestOutputs<'_>,
) -> Result<Warnings, CliError> {
    require_artifact(model, "train")?;
    require_artifact(features, "score")?;
    require_artifact(returns, "returns")?;
    let model = NnlsModel::load(model)?;
    let mut table = FeatureTable::read_csv(features)?;
    let records = read_returns_csv(returns)?;
    let labeled: Option<BTreeSet<FilingKey>> = match labels {
        Some(p) => {
            require_artifact(p, "label")?;
            Some(read_labels_csv(p, basis)?.iter().map(|l| l.key()).collect())
        }
        None => None,
    };
    let candidates = table
        .rows
        .iter()
        .map(|r| r.filing_key.clone())
        .filter(|k| labeled.as_ref().is_none_or(|l| l.contains(k)));
    let keep = select_rows(candidates, split.test_years, test_sample, seed);
    table.rows.retain(|r| keep.contains(&r.filing_key));

    let report = run_backtest(&model, &table, &records, split, k, basis)?;
    let sweep_rows = if sweep.is_empty() {
        Vec::new()
    } else {
        k_sweep(&model, &table, &records, split, sweep, basis)?
    };
    for p in [out.report, out.cumulative, out.ksweep] {
        ensure_parent(p)?;
    }
    report.write_json(out.report)?;
    report.write_cumulative_csv(out.cumulative)?;
    write_ksweep_csv(out.ksweep, &sweep_rows)?;
    log::info!(
        "backtest: strategy wealth {:.4}, benchmark wealth {:.4}",
        report.final_strategy_wealth(),
        report.final_benchmark_wealth()
    );
    let mut warnings: Warnings =
        report.omitted_years.iter().map(|y| format!("test year {y} omitted: no picks")).collect();
    for y in &report.per_year {
        for t in &y.skipped_missing_returns {
            warnings.push(format!("{} {t}: no return record, next-ranked filing used", y.year));
        }
    }
    Ok(warnings)
}

/// Stage warnings keyed by stage name, as written to the error report.
pub type ErrorReport = BTreeMap<String, Warnings>;
