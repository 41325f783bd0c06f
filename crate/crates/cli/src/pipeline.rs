//! Resumable stage runner. Every stage records the hashes of its inputs,
//! its settings and its outputs; a stage whose inputs and settings are
//! unchanged and whose outputs are intact is skipped.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use arsignal::hashing::{sha256_hex, sha256_path};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{FilingSource, LlmProviderConfig, PipelineConfig};
use crate::stages::{self, BacktestOutputs, ErrorReport, Warnings};
use crate::{CliError, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Embed,
    Score,
    Returns,
    Label,
    Train,
    Backtest,
}

impl Stage {
    /// Dependency order.
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Embed,
        Stage::Score,
        Stage::Returns,
        Stage::Label,
        Stage::Train,
        Stage::Backtest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Embed => "embed",
            Stage::Score => "score",
            Stage::Returns => "returns",
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::Backtest => "backtest",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| CliError::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub input_hashes: BTreeMap<String, String>,
    pub settings_hash: String,
    pub output_hashes: BTreeMap<String, String>,
    pub wall_time_ms: u128,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stages: BTreeMap<String, StageEntry>,
}

impl StageManifest {
    fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Ok(Self::default());
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct PipelineOutcome {
    pub ran: Vec<Stage>,
    pub skipped: Vec<Stage>,
    pub warnings: ErrorReport,
}

/// One declared input: a label, its path and who produces it (`None` for
/// user-supplied files).
struct Input {
    label: &'static str,
    path: PathBuf,
    producer: Option<Stage>,
}

fn artifact(label: &'static str, path: &Path, producer: Stage) -> Input {
    Input { label, path: path.to_path_buf(), producer: Some(producer) }
}

fn user(label: &'static str, path: &Path) -> Input {
    Input { label, path: path.to_path_buf(), producer: None }
}

fn inputs(stage: Stage, cfg: &PipelineConfig, l: &Layout) -> Vec<Input> {
    match stage {
        Stage::Ingest => {
            let mut v = vec![user("universe", &cfg.ingest.universe)];
            if let FilingSource::Local { dir } = &cfg.ingest.source {
                v.push(user("filings", dir));
            }
            v
        }
        Stage::Embed => vec![artifact("corpus", &l.corpus, Stage::Ingest)],
        Stage::Score => {
            let mut v = vec![
                artifact("corpus", &l.corpus, Stage::Ingest),
                artifact("index", &l.index, Stage::Embed),
            ];
            if let Some(q) = &cfg.llm.questions {
                v.push(user("questions", q));
            }
            if let LlmProviderConfig::Keyword { rules } = &cfg.llm.provider {
                v.push(user("keyword_rules", rules));
            }
            v
        }
        Stage::Returns => vec![
            artifact("corpus", &l.corpus, Stage::Ingest),
            user("prices", &cfg.returns.price_dir),
        ],
        Stage::Label => vec![artifact("returns", &l.returns, Stage::Returns)],
        Stage::Train => vec![
            artifact("features", &l.features, Stage::Score),
            artifact("labels", &l.labels, Stage::Label),
        ],
        Stage::Backtest => vec![
            artifact("model", &l.model, Stage::Train),
            artifact("features", &l.features, Stage::Score),
            artifact("returns", &l.returns, Stage::Returns),
            artifact("labels", &l.labels, Stage::Label),
        ],
    }
}

fn outputs(stage: Stage, l: &Layout) -> Vec<(&'static str, PathBuf)> {
    match stage {
        Stage::Ingest => vec![("corpus", l.corpus.clone())],
        Stage::Embed => vec![("index", l.index.clone())],
        Stage::Score => vec![("features", l.features.clone())],
        Stage::Returns => vec![("returns", l.returns.clone())],
        Stage::Label => vec![("labels", l.labels.clone())],
        Stage::Train => vec![("model", l.model.clone())],
        Stage::Backtest => vec![
            ("report", l.report.clone()),
            ("cumulative", l.cumulative.clone()),
            ("ksweep", l.ksweep.clone()),
        ],
    }
}

/// Stage settings that affect its outputs. File contents are covered by the
/// input hashes, so paths are left out.
fn settings(stage: Stage, cfg: &PipelineConfig) -> serde_json::Value {
    let provider_kind = |p: &LlmProviderConfig| match p {
        LlmProviderConfig::Constant { score } => json!({"constant": score}),
        LlmProviderConfig::Keyword { .. } => json!("keyword"),
        LlmProviderConfig::Http { endpoint, model, .. } => json!({"http": [endpoint, model]}),
    };
    match stage {
        Stage::Ingest => json!({
            "years": cfg.ingest.years,
            "source": matches!(cfg.ingest.source, FilingSource::Edgar).then_some("edgar"),
        }),
        Stage::Embed => json!({
            "provider": cfg.embedding.provider,
            "seed": cfg.seed,
            "chunk_chars": cfg.embedding.chunk_chars,
            "overlap_chars": cfg.embedding.overlap_chars,
        }),
        Stage::Score => json!({
            "provider": provider_kind(&cfg.llm.provider),
            "embedding": cfg.embedding.provider,
            "seed": cfg.seed,
            "chunks_per_question": cfg.llm.chunks_per_question,
            "max_attempts": cfg.llm.max_attempts,
        }),
        Stage::Returns => json!({ "benchmark": cfg.returns.benchmark }),
        Stage::Label => json!({ "target": cfg.label.target, "bins": cfg.label.bins }),
        Stage::Train => json!({
            "train_years": cfg.split.train_years,
            "sample": cfg.split.train_sample,
            "seed": cfg.seed,
        }),
        Stage::Backtest => json!({
            "test_years": cfg.split.test_years,
            "sample": cfg.split.test_sample,
            "seed": cfg.seed,
            "k": cfg.backtest.k,
            "k_sweep": cfg.backtest.k_sweep,
            "basis": cfg.backtest.basis,
        }),
    }
}

fn hash_outputs(stage: Stage, l: &Layout) -> Result<Option<BTreeMap<String, String>>, CliError> {
    let mut out = BTreeMap::new();
    for (label, path) in outputs(stage, l) {
        if !path.exists() {
            return Ok(None);
        }
        out.insert(label.to_string(), sha256_path(&path)?);
    }
    Ok(Some(out))
}

fn execute(stage: Stage, cfg: &PipelineConfig, l: &Layout) -> Result<Warnings, CliError> {
    match stage {
        Stage::Ingest => stages::run_ingest(&cfg.ingest.universe, &cfg.ingest.source, cfg.ingest_years()?, &l.corpus),
        Stage::Embed => {
            let e = &cfg.embedding;
            let embedder = stages::build_embedder(&e.provider, cfg.seed);
            stages::run_embed(&l.corpus, &l.index, embedder.as_ref(), e.chunk_chars, e.overlap_chars, e.batch_size)
        }
        Stage::Score => {
            let embedder = stages::build_embedder(&cfg.embedding.provider, cfg.seed);
            stages::run_score(&l.corpus, &l.index, embedder.as_ref(), &cfg.llm, &l.features, Some(&l.score_cache))
        }
        Stage::Returns => stages::run_returns(&l.corpus, &cfg.returns.price_dir, &cfg.returns.benchmark, &l.returns),
        Stage::Label => stages::run_label(&l.returns, cfg.label.target, cfg.label.bins, &l.labels),
        Stage::Train => {
            let split = cfg.split.spec()?;
            stages::run_train(&l.features, &l.labels, split.train_years, cfg.split.train_sample, cfg.seed, &l.model)
        }
        Stage::Backtest => stages::run_backtest_stage(
            &l.model,
            &l.features,
            &l.returns,
            Some(&l.labels),
            &cfg.split.spec()?,
            cfg.backtest.k()?,
            &cfg.backtest.k_sweep()?,
            cfg.backtest.basis,
            cfg.split.test_sample,
            cfg.seed,
            BacktestOutputs { report: &l.report, cumulative: &l.cumulative, ksweep: &l.ksweep },
        ),
    }
}

/// Runs `requested` stages in dependency order.
///
/// A missing input stops the run with an error naming the stage that
/// produces it. Per-item warnings are collected into `error_report.json`.
pub fn run_pipeline(cfg: &PipelineConfig, requested: &[Stage]) -> Result<PipelineOutcome, CliError> {
    let layout = Layout::new(&cfg.out_dir);
    std::fs::create_dir_all(&layout.root)?;
    let mut manifest = StageManifest::load(&layout.manifest)?;
    let mut report: ErrorReport = if layout.errors.exists() {
        serde_json::from_str(&std::fs::read_to_string(&layout.errors)?)?
    } else {
        ErrorReport::new()
    };
    let mut stages: Vec<Stage> = requested.to_vec();
    stages.sort();
    stages.dedup();

    let mut outcome = PipelineOutcome::default();
    for stage in stages {
        let wrap = |e: CliError| CliError::Stage { stage: stage.name(), inner: Box::new(e) };
        let mut input_hashes = BTreeMap::new();
        for input in inputs(stage, cfg, &layout) {
            if !input.path.exists() {
                let err = match input.producer {
                    Some(p) => CliError::missing_artifact(&input.path, p.name()),
                    None => CliError::missing_user_input(&input.path, input.label),
                };
                return Err(wrap(err));
            }
            input_hashes.insert(input.label.to_string(), sha256_path(&input.path).map_err(|e| wrap(e.into()))?);
        }
        let settings_hash = sha256_hex(settings(stage, cfg).to_string().as_bytes());

        if let Some(prev) = manifest.stages.get(stage.name()) {
            let unchanged = prev.input_hashes == input_hashes && prev.settings_hash == settings_hash;
            if unchanged && hash_outputs(stage, &layout)?.as_ref() == Some(&prev.output_hashes) {
                log::info!("{stage}: inputs unchanged, skipping");
                outcome.skipped.push(stage);
                continue;
            }
        }

        log::info!("{stage}: running");
        let started = Instant::now();
        let warnings = execute(stage, cfg, &layout).map_err(wrap)?;
        let wall_time_ms = started.elapsed().as_millis();
        let output_hashes = hash_outputs(stage, &layout)?
            .ok_or_else(|| wrap(CliError::Invalid("stage finished without writing its outputs".into())))?;
        manifest.stages.insert(
            stage.name().to_string(),
            StageEntry { stage: stage.name().to_string(), input_hashes, settings_hash, output_hashes, wall_time_ms },
        );
        manifest.save(&layout.manifest)?;
        for w in &warnings {
            log::warn!("{stage}: {w}");
        }
        report.insert(stage.name().to_string(), warnings.clone());
        outcome.warnings.insert(stage.name().to_string(), warnings);
        outcome.ran.push(stage);
    }
    std::fs::write(&layout.errors, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip_in_dependency_order() {
        let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
        assert_eq!(names, ["ingest", "embed", "score", "returns", "label", "train", "backtest"]);
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("deploy".parse::<Stage>().is_err());
        let mut v = vec![Stage::Backtest, Stage::Ingest, Stage::Label];
        v.sort();
        assert_eq!(v, [Stage::Ingest, Stage::Label, Stage::Backtest]);
    }
}
