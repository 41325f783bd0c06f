use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{
    build_prompt, parse_score, CachedAnswer, FeatureRow, FeatureTable, LlmProvider, QuestionSet,
    ScoreCache, ScoredAnswer, ScoringError,
};
use crate::corpus::{Chunk, Filing};
use crate::embed_index::{embed_batch, EmbedError, EmbeddingProvider, EmbeddingVector, VectorIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoringOptions {
    pub chunks_per_question: usize,
    /// Attempts per question on transport errors or unparseable replies.
    pub max_attempts: u32,
    /// Filings scored concurrently.
    pub max_in_flight: usize,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self { chunks_per_question: 4, max_attempts: 3, max_in_flight: 1 }
    }
}

/// A filing whose row could not be completed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreFailure {
    pub ticker: String,
    pub filing_date: NaiveDate,
    pub question_id: Option<String>,
    pub message: String,
}

/// Scores every question for one filing. Either all questions are scored or
/// the row fails as a whole.
#[allow(clippy::too_many_arguments)]
pub fn score_filing(
    filing: &Filing,
    qs: &QuestionSet,
    index: &VectorIndex,
    embedder: &dyn EmbeddingProvider,
    llm: &dyn LlmProvider,
    cache: &ScoreCache,
    opts: &ScoringOptions,
) -> Result<FeatureRow, ScoreFailure> {
    let question_vectors = embed_questions(qs, index, embedder).map_err(|e| ScoreFailure {
        ticker: filing.ticker.clone(),
        filing_date: filing.filing_date,
        question_id: None,
        message: e.to_string(),
    })?;
    score_with_vectors(filing, qs, &question_vectors, index, llm, cache, opts)
}

/// Scores a batch of filings. Rows come back in filing-key order; failed
/// filings are reported separately and never produce partial rows.
pub fn score_filings(
    filings: &[Filing],
    qs: &QuestionSet,
    index: &VectorIndex,
    embedder: &(dyn EmbeddingProvider + Sync),
    llm: &dyn LlmProvider,
    cache: &ScoreCache,
    opts: &ScoringOptions,
) -> Result<(FeatureTable, Vec<ScoreFailure>), ScoringError> {
    let question_vectors = embed_questions(qs, index, embedder)?;
    let results: Mutex<Vec<(usize, Result<FeatureRow, ScoreFailure>)>> = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let workers = opts.max_in_flight.clamp(1, filings.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(filing) = filings.get(i) else { break };
                let r = score_with_vectors(filing, qs, &question_vectors, index, llm, cache, opts);
                results.lock().unwrap_or_else(|e| e.into_inner()).push((i, r));
            });
        }
    });
    let mut results = results.into_inner().unwrap_or_else(|e| e.into_inner());
    results.sort_by_key(|(i, _)| *i);

    let mut table = FeatureTable::new(qs.ids());
    let mut failures = Vec::new();
    for (_, r) in results {
        match r {
            Ok(row) => table.rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    table.rows.sort_by(|a, b| a.filing_key.cmp(&b.filing_key));
    Ok((table, failures))
}

fn embed_questions(
    qs: &QuestionSet,
    index: &VectorIndex,
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if embedder.id() != index.provider_id() {
        return Err(EmbedError::ProviderMismatch {
            index: index.provider_id().to_string(),
            query: embedder.id(),
        });
    }
    let texts: Vec<&str> = qs.questions.iter().map(|q| q.text.as_str()).collect();
    embed_batch(embedder, &texts)
}

fn score_with_vectors(
    filing: &Filing,
    qs: &QuestionSet,
    question_vectors: &[EmbeddingVector],
    index: &VectorIndex,
    llm: &dyn LlmProvider,
    cache: &ScoreCache,
    opts: &ScoringOptions,
) -> Result<FeatureRow, ScoreFailure> {
    let key = filing.key();
    let provider_id = llm.id();
    let fail = |question_id: Option<&str>, message: String| ScoreFailure {
        ticker: filing.ticker.clone(),
        filing_date: filing.filing_date,
        question_id: question_id.map(str::to_string),
        message,
    };
    let mut scores = Vec::with_capacity(qs.len());
    for (q, qv) in qs.questions.iter().zip(question_vectors) {
        if let Some(hit) = cache.get(&key, &q.id, &provider_id, &qs.version) {
            scores.push(hit.score);
            continue;
        }
        let hits = index
            .top_k(qv, opts.chunks_per_question, Some(&key))
            .map_err(|e| fail(Some(&q.id), e.to_string()))?;
        if hits.is_empty() {
            return Err(fail(Some(&q.id), ScoringError::NoContext(key.to_string()).to_string()));
        }
        let mut chunks = Vec::with_capacity(hits.len());
        for (r, _) in &hits {
            let text = filing.clean_text.get(r.start..r.end).ok_or_else(|| {
                fail(Some(&q.id), format!("chunk {r} span is outside the stored filing text"))
            })?;
            chunks.push(Chunk {
                filing_key: key.clone(),
                chunk_index: r.chunk_index,
                text: text.to_string(),
                char_span: (r.start, r.end),
            });
        }
        let (system, user) = build_prompt(&q.text, &chunks);

        let mut last_err = None;
        let mut answer = None;
        for _ in 0..opts.max_attempts.max(1) {
            let attempt = llm.complete(&system, &user).and_then(|raw| {
                let score = parse_score(&raw)?;
                Ok((score, raw))
            });
            match attempt {
                Ok(ok) => {
                    answer = Some(ok);
                    break;
                }
                Err(e @ ScoringError::Provider { retriable: false, .. }) => {
                    last_err = Some(e);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let Some((score, raw_response)) = answer else {
            let message = last_err.map_or_else(|| "no attempts".into(), |e| e.to_string());
            return Err(fail(Some(&q.id), message));
        };
        let entry = CachedAnswer {
            provider_id: provider_id.clone(),
            questions_version: qs.version.clone(),
            answer: ScoredAnswer {
                filing_key: key.clone(),
                question_id: q.id.clone(),
                score,
                raw_response,
                context_chunk_refs: hits.iter().map(|(r, _)| r.to_string()).collect(),
            },
        };
        cache.put(entry).map_err(|e| fail(Some(&q.id), e.to_string()))?;
        scores.push(score);
    }
    Ok(FeatureRow { filing_key: key, scores })
}
