//! Pipeline configuration, read from one TOML file. Relative paths are
//! resolved against the directory containing the file.

use std::path::{Path, PathBuf};

use arsignal::backtest::{KSpec, SplitSpec, YearRange};
use arsignal::corpus::{DEFAULT_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS};
use arsignal::embed_index::DEFAULT_STUB_DIM;
use arsignal::labeling::{SourceField, DEFAULT_BINS};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Where every artifact is written.
    pub out_dir: PathBuf,
    /// Seeds the stub embedder and any sampling.
    #[serde(default)]
    pub seed: u64,
    pub ingest: IngestConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    pub llm: LlmConfig,
    pub returns: ReturnsConfig,
    #[serde(default)]
    pub label: LabelConfig,
    pub split: SplitConfig,
    #[serde(default)]
    pub backtest: BacktestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    /// CSV with `ticker,cik` columns.
    pub universe: PathBuf,
    pub source: FilingSource,
    /// Calendar years of filings to ingest, e.g. `"2016-2019"`.
    pub years: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilingSource {
    /// Files named `TICKER_YYYY-MM-DD.html` in one directory.
    Local { dir: PathBuf },
    /// EDGAR over HTTPS; needs `EDGAR_IDENTITY`.
    Edgar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default)]
    pub provider: EmbeddingProviderConfig,
    #[serde(default = "default_chunk_chars")]
    pub chunk_chars: usize,
    #[serde(default = "default_overlap")]
    pub overlap_chars: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: EmbeddingProviderConfig::default(),
            chunk_chars: DEFAULT_CHUNK_CHARS,
            overlap_chars: DEFAULT_OVERLAP_CHARS,
            batch_size: default_batch(),
        }
    }
}

fn default_chunk_chars() -> usize {
    DEFAULT_CHUNK_CHARS
}

fn default_overlap() -> usize {
    DEFAULT_OVERLAP_CHARS
}

fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingProviderConfig {
    HashStub {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Http {
        endpoint: String,
        model: String,
        dim: usize,
        /// Environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self::HashStub { dim: DEFAULT_STUB_DIM }
    }
}

fn default_dim() -> usize {
    DEFAULT_STUB_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub provider: LlmProviderConfig,
    /// Question file; the built-in set when absent.
    #[serde(default)]
    pub questions: Option<PathBuf>,
    #[serde(default = "default_chunks_per_question")]
    pub chunks_per_question: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_chunks_per_question() -> usize {
    4
}

fn default_attempts() -> u32 {
    3
}

fn default_in_flight() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmProviderConfig {
    Constant {
        score: u8,
    },
    /// JSON file of `{"rules": [{"phrase", "score"}], "default"}`.
    Keyword {
        rules: PathBuf,
    },
    Http {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        requests_per_minute: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnsConfig {
    /// Directory of `symbol,date,adjusted_close` CSV files.
    pub price_dir: PathBuf,
    pub benchmark: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    #[serde(default = "default_target")]
    pub target: SourceField,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { target: default_target(), bins: DEFAULT_BINS }
    }
}

fn default_target() -> SourceField {
    SourceField::Target12m
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_years: String,
    pub test_years: String,
    /// Sample at most this many training rows.
    #[serde(default)]
    pub train_sample: Option<usize>,
    /// Sample at most this many test rows.
    #[serde(default)]
    pub test_sample: Option<usize>,
}

impl SplitConfig {
    pub fn spec(&self) -> Result<SplitSpec, CliError> {
        let train: YearRange = self.train_years.parse()?;
        let test: YearRange = self.test_years.parse()?;
        Ok(SplitSpec::new(train, test)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    #[serde(default = "default_k")]
    pub k: String,
    #[serde(default = "default_k_sweep")]
    pub k_sweep: Vec<String>,
    #[serde(default = "default_target")]
    pub basis: SourceField,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self { k: default_k(), k_sweep: default_k_sweep(), basis: default_target() }
    }
}

impl BacktestConfig {
    pub fn k(&self) -> Result<KSpec, CliError> {
        Ok(self.k.parse()?)
    }

    pub fn k_sweep(&self) -> Result<Vec<KSpec>, CliError> {
        self.k_sweep.iter().map(|k| Ok(k.parse()?)).collect()
    }
}

fn default_k() -> String {
    "5".into()
}

fn default_k_sweep() -> Vec<String> {
    ["1", "5", "10", "20"].map(String::from).to_vec()
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.ingest.universe);
        if let FilingSource::Local { dir } = &mut self.ingest.source {
            fix(dir);
        }
        if let Some(q) = &mut self.llm.questions {
            fix(q);
        }
        if let LlmProviderConfig::Keyword { rules } = &mut self.llm.provider {
            fix(rules);
        }
        fix(&mut self.returns.price_dir);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.ingest_years()?;
        self.split.spec()?;
        self.backtest.k()?;
        self.backtest.k_sweep()?;
        if self.label.bins < 2 {
            return Err(CliError::Config(format!("label.bins must be at least 2, got {}", self.label.bins)));
        }
        if self.embedding.overlap_chars >= self.embedding.chunk_chars {
            return Err(CliError::Config("embedding.overlap_chars must be below chunk_chars".into()));
        }
        Ok(())
    }

    pub fn ingest_years(&self) -> Result<YearRange, CliError> {
        Ok(self.ingest.years.parse()?)
    }
}
