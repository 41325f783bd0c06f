//! Pipeline orchestration and subcommand implementations for the `arsignal`
//! binary.

pub mod config;
pub mod pipeline;
pub mod stages;
pub mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, PipelineOutcome, Stage};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing input {}: {hint}", path.display())]
    MissingInput { path: PathBuf, hint: String },
    #[error("stage {stage} failed: {inner}")]
    Stage { stage: &'static str, inner: Box<CliError> },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Corpus(#[from] arsignal::corpus::CorpusError),
    #[error(transparent)]
    Embed(#[from] arsignal::embed_index::EmbedError),
    #[error(transparent)]
    Scoring(#[from] arsignal::llm_scoring::ScoringError),
    #[error(transparent)]
    MarketData(#[from] arsignal::market_data::MarketDataError),
    #[error(transparent)]
    Label(#[from] arsignal::labeling::LabelError),
    #[error(transparent)]
    Regression(#[from] arsignal::regression::RegressionError),
    #[error(transparent)]
    Backtest(#[from] arsignal::backtest::BacktestError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// A missing artifact that another stage produces.
    pub fn missing_artifact(path: &Path, producer: &str) -> Self {
        CliError::MissingInput {
            path: path.to_path_buf(),
            hint: format!("run stage `{producer}` first"),
        }
    }

    /// A missing file the user is expected to supply.
    pub fn missing_user_input(path: &Path, what: &str) -> Self {
        CliError::MissingInput { path: path.to_path_buf(), hint: format!("expected {what}") }
    }
}

/// Artifact locations under the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
    pub corpus: PathBuf,
    pub index: PathBuf,
    pub features: PathBuf,
    pub score_cache: PathBuf,
    pub returns: PathBuf,
    pub labels: PathBuf,
    pub model: PathBuf,
    pub report: PathBuf,
    pub cumulative: PathBuf,
    pub ksweep: PathBuf,
    pub manifest: PathBuf,
    pub errors: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        let j = |name: &str| root.join(name);
        Self {
            root: root.to_path_buf(),
            corpus: j("corpus"),
            index: j("index"),
            features: j("features.csv"),
            score_cache: j("score_cache.jsonl"),
            returns: j("returns.csv"),
            labels: j("labels.csv"),
            model: j("model.json"),
            report: j("report.json"),
            cumulative: j("cumulative.csv"),
            ksweep: j("ksweep.csv"),
            manifest: j("pipeline_manifest.json"),
            errors: j("error_report.json"),
        }
    }
}
