use std::path::PathBuf;
use std::process::ExitCode;

use arsignal::backtest::{KSpec, SplitSpec, YearRange};
use arsignal::labeling::SourceField;
use arsignal_cli::config::{EmbeddingProviderConfig, FilingSource, LlmConfig, LlmProviderConfig};
use arsignal_cli::stages::{self, BacktestOutputs};
use arsignal_cli::synth::{write_fixture, SynthSpec};
use arsignal_cli::{run_pipeline, CliError, PipelineConfig, Stage};
use clap::{Args, Parser, Subcommand};

/// Score annual reports with an LLM, label filing-window returns, fit a
/// non-negative regression and backtest a top-k portfolio.
#[derive(Debug, Parser)]
#[command(name = "arsignal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resolve, download, clean and store 10-K filings.
    Ingest {
        /// CSV with ticker,cik columns.
        #[arg(long)]
        universe: PathBuf,
        /// Inclusive filing years, e.g. 2016-2019.
        #[arg(long)]
        years: YearRange,
        /// Read TICKER_YYYY-MM-DD.html files from this directory instead of EDGAR.
        #[arg(long)]
        local_dir: Option<PathBuf>,
        /// Corpus directory to create or extend.
        #[arg(long)]
        out: PathBuf,
    },
    /// Chunk and embed the corpus into a vector index.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        embedder: EmbedArgs,
        #[arg(long, default_value_t = arsignal::corpus::DEFAULT_CHUNK_CHARS)]
        chunk_chars: usize,
        #[arg(long, default_value_t = arsignal::corpus::DEFAULT_OVERLAP_CHARS)]
        overlap_chars: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        /// Index directory (replaced if present).
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer every question for every filing and write features.csv.
    Score {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[command(flatten)]
        embedder: EmbedArgs,
        /// Question set JSON; the built-in set when omitted.
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Keyword rules JSON for the offline stub model.
        #[arg(long, conflicts_with_all = ["constant_score", "llm_endpoint"])]
        keyword_rules: Option<PathBuf>,
        /// Answer every question with this score.
        #[arg(long, conflicts_with = "llm_endpoint")]
        constant_score: Option<u8>,
        /// OpenAI-compatible chat completions URL.
        #[arg(long, requires = "llm_model")]
        llm_endpoint: Option<String>,
        #[arg(long)]
        llm_model: Option<String>,
        /// Environment variable holding the chat API key.
        #[arg(long, default_value = "OPENAI_API_KEY")]
        llm_api_key_env: String,
        #[arg(long)]
        requests_per_minute: Option<f64>,
        #[arg(long, default_value_t = 4)]
        chunks_per_question: usize,
        #[arg(long, default_value_t = 3)]
        max_attempts: u32,
        #[arg(long, default_value_t = 1)]
        max_in_flight: usize,
        /// JSONL answer cache; reused across runs.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute filing-window stock and benchmark returns.
    Returns {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory of symbol,date,adjusted_close CSV files.
        #[arg(long)]
        prices: PathBuf,
        #[arg(long, default_value = "SPX")]
        benchmark: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn returns into per-year rank-binned labels.
    Label {
        #[arg(long)]
        returns: PathBuf,
        /// Raw return to rank: 12m or max.
        #[arg(long, default_value = "12m")]
        target: SourceField,
        #[arg(long, default_value_t = arsignal::labeling::DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the non-negative regression on the training years.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        train_years: YearRange,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the model on the test years.
    Backtest {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        returns: PathBuf,
        /// Restrict candidates to labeled filings.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        train_years: YearRange,
        #[arg(long)]
        test_years: YearRange,
        /// Portfolio size: a count (5) or a percentage of candidates (5%).
        #[arg(long, default_value = "5")]
        k: KSpec,
        /// Portfolio sizes for the k-sweep table.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20")]
        k_sweep: Vec<KSpec>,
        /// Return used for evaluation: 12m or max.
        #[arg(long, default_value = "12m")]
        basis: SourceField,
        #[command(flatten)]
        sample: SampleArgs,
        /// report.json path; cumulative.csv and ksweep.csv go next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run pipeline stages from a config file, skipping unchanged ones.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of ingest,embed,score,returns,label,train,backtest.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
    },
    /// Write the synthetic offline fixture universe.
    SynthFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 2016)]
        first_year: i32,
        #[arg(long, default_value_t = 2019)]
        last_year: i32,
    },
}

#[derive(Debug, Args)]
struct EmbedArgs {
    /// HTTP embedding endpoint; the hash stub when omitted.
    #[arg(long, requires_all = ["embed_model", "embed_dim"])]
    embed_endpoint: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    /// Vector dimension.
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long, default_value = "EMBEDDING_API_KEY")]
    embed_api_key_env: String,
    /// Seed of the hash stub.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EmbedArgs {
    fn config(&self) -> EmbeddingProviderConfig {
        match (&self.embed_endpoint, &self.embed_model) {
            (Some(endpoint), Some(model)) => EmbeddingProviderConfig::Http {
                endpoint: endpoint.clone(),
                model: model.clone(),
                dim: self.embed_dim.unwrap_or_default(),
                api_key_env: Some(self.embed_api_key_env.clone()),
            },
            _ => EmbeddingProviderConfig::HashStub {
                dim: self.embed_dim.unwrap_or(arsignal::embed_index::DEFAULT_STUB_DIM),
            },
        }
    }
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Use a seeded sample of at most this many rows.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { universe, years, local_dir, out } => {
            let source = match local_dir {
                Some(dir) => FilingSource::Local { dir },
                None => FilingSource::Edgar,
            };
            report(stages::run_ingest(&universe, &source, years, &out)?);
        }
        Command::Embed { corpus, embedder, chunk_chars, overlap_chars, batch_size, out } => {
            let e = stages::build_embedder(&embedder.config(), embedder.seed);
            report(stages::run_embed(&corpus, &out, e.as_ref(), chunk_chars, overlap_chars, batch_size)?);
        }
        Command::Score {
            corpus,
            index,
            embedder,
            questions,
            keyword_rules,
            constant_score,
            llm_endpoint,
            llm_model,
            llm_api_key_env,
            requests_per_minute,
            chunks_per_question,
            max_attempts,
            max_in_flight,
            cache,
            out,
        } => {
            let provider = match (keyword_rules, constant_score, llm_endpoint) {
                (Some(rules), _, _) => LlmProviderConfig::Keyword { rules },
                (_, Some(score), _) => LlmProviderConfig::Constant { score },
                (_, _, Some(endpoint)) => LlmProviderConfig::Http {
                    endpoint,
                    model: llm_model.unwrap_or_default(),
                    api_key_env: Some(llm_api_key_env),
                    requests_per_minute,
                },
                _ => {
                    return Err(CliError::Config(
                        "choose a model: --keyword-rules, --constant-score or --llm-endpoint".into(),
                    ))
                }
            };
            let llm = LlmConfig { provider, questions, chunks_per_question, max_attempts, max_in_flight };
            let e = stages::build_embedder(&embedder.config(), embedder.seed);
            report(stages::run_score(&corpus, &index, e.as_ref(), &llm, &out, cache.as_deref())?);
        }
        Command::Returns { corpus, prices, benchmark, out } => {
            report(stages::run_returns(&corpus, &prices, &benchmark, &out)?);
        }
        Command::Label { returns, target, bins, out } => {
            report(stages::run_label(&returns, target, bins, &out)?);
        }
        Command::Train { features, labels, train_years, sample, out } => {
            report(stages::run_train(&features, &labels, train_years, sample.sample, sample.sample_seed, &out)?);
        }
        Command::Backtest {
            model,
            features,
            returns,
            labels,
            train_years,
            test_years,
            k,
            k_sweep,
            basis,
            sample,
            out,
        } => {
            let split = SplitSpec::new(train_years, test_years)?;
            let dir = out.parent().map(PathBuf::from).unwrap_or_default();
            let (cumulative, ksweep) = (dir.join("cumulative.csv"), dir.join("ksweep.csv"));
            report(stages::run_backtest_stage(
                &model,
                &features,
                &returns,
                labels.as_deref(),
                &split,
                k,
                &k_sweep,
                basis,
                sample.sample,
                sample.sample_seed,
                BacktestOutputs { report: &out, cumulative: &cumulative, ksweep: &ksweep },
            )?);
        }
        Command::Pipeline { config, stages } => {
            let cfg = PipelineConfig::load(&config)?;
            let stages = stages.unwrap_or_else(|| Stage::ALL.to_vec());
            let outcome = run_pipeline(&cfg, &stages)?;
            for s in &outcome.ran {
                let n = outcome.warnings.get(s.name()).map_or(0, Vec::len);
                println!("{s}: ran ({n} warnings)");
            }
            for s in &outcome.skipped {
                println!("{s}: skipped (unchanged)");
            }
        }
        Command::SynthFixture { out, seed, first_year, last_year } => {
            if last_year < first_year + 3 {
                return Err(CliError::Config("the fixture needs at least four years".into()));
            }
            write_fixture(&out, &SynthSpec { first_year, last_year, seed })?;
            println!("wrote fixture to {}", out.display());
        }
    }
    Ok(())
}

fn report(warnings: stages::Warnings) {
    for w in &warnings {
        eprintln!("warning: {w}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
