//! Chunk embeddings and an exact cosine-similarity index.

mod persist;
mod provider;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use persist::{INDEX_FORMAT_VERSION, INDEX_MAGIC, SIDECAR_FILE, VECTORS_FILE};
pub use provider::{
    embed_batch, embed_text, EmbeddingProvider, HashStubProvider, HttpEmbeddingProvider,
    DEFAULT_STUB_DIM,
};

use crate::corpus::{chunk_filing, Chunk, Filing};
use crate::FilingKey;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding provider failed: {message}")]
    Provider { message: String, retriable: bool },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot normalize a zero vector")]
    ZeroNorm,
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("chunk {0} is already indexed")]
    DuplicateRef(String),
    #[error("index was built with provider {index} but query provider is {query}")]
    ProviderMismatch { index: String, query: String },
    #[error("chunking failed: {0}")]
    Chunking(String),
    #[error("malformed index: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EmbedError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, EmbedError::Provider { retriable: true, .. })
    }
}

/// A unit-normalised embedding.
///
/// Values are stored as `f32` (the on-disk format); all arithmetic is done
/// in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Normalises a raw provider vector to unit length.
    pub fn normalized(raw: &[f64]) -> Result<Self, EmbedError> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::ZeroNorm);
        }
        Ok(Self { values: raw.iter().map(|v| (v / norm) as f32).collect() })
    }

    /// Wraps stored values without renormalising (used when loading an index).
    pub(crate) fn from_stored(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// `dot(a, b) / (|a| |b|)`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dimension() != b.dimension() {
        return Err(EmbedError::DimensionMismatch { expected: a.dimension(), got: b.dimension() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    Ok((dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

/// Provenance of an indexed vector: which filing, which chunk, which span.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkRef {
    pub ticker: String,
    pub filing_date: NaiveDate,
    pub chunk_index: usize,
    pub start: usize,
    pub end: usize,
}

impl ChunkRef {
    pub fn from_chunk(chunk: &Chunk) -> Self {
        Self {
            ticker: chunk.filing_key.ticker.clone(),
            filing_date: chunk.filing_key.filing_date,
            chunk_index: chunk.chunk_index,
            start: chunk.char_span.0,
            end: chunk.char_span.1,
        }
    }

    pub fn filing_key(&self) -> FilingKey {
        FilingKey::new(self.ticker.clone(), self.filing_date)
    }

    fn order_key(&self) -> (&str, NaiveDate, usize) {
        (&self.ticker, self.filing_date, self.chunk_index)
    }
}

impl std::fmt::Display for ChunkRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.filing_key(), self.chunk_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Record {
    chunk: ChunkRef,
    vector: EmbeddingVector,
    norm: f64,
}

/// Exact-scan vector index. Single writer while building; read-only after.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dimension: usize,
    provider_id: String,
    records: Vec<Record>,
    refs: HashSet<(String, NaiveDate, usize)>,
}

impl VectorIndex {
    pub fn new(dimension: usize, provider_id: impl Into<String>) -> Self {
        Self { dimension, provider_id: provider_id.into(), records: Vec::new(), refs: HashSet::new() }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn add(&mut self, chunk: ChunkRef, vector: EmbeddingVector) -> Result<(), EmbedError> {
        if vector.dimension() != self.dimension {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dimension,
                got: vector.dimension(),
            });
        }
        let key = (chunk.ticker.clone(), chunk.filing_date, chunk.chunk_index);
        if !self.refs.insert(key) {
            return Err(EmbedError::DuplicateRef(chunk.to_string()));
        }
        let norm = vector.norm();
        self.records.push(Record { chunk, vector, norm });
        Ok(())
    }

    /// Records in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&ChunkRef, &EmbeddingVector)> {
        self.records.iter().map(|r| (&r.chunk, &r.vector))
    }

    /// Chunk refs belonging to one filing, in chunk order.
    pub fn chunks_for(&self, filing: &FilingKey) -> Vec<&ChunkRef> {
        let mut refs: Vec<&ChunkRef> = self
            .records
            .iter()
            .map(|r| &r.chunk)
            .filter(|c| c.ticker == filing.ticker && c.filing_date == filing.filing_date)
            .collect();
        refs.sort_by_key(|c| c.chunk_index);
        refs
    }

    /// The `k` most similar records by exhaustive scan, most similar first.
    /// Ties are broken by (ticker, filing date, chunk index) ascending. With
    /// `filter`, only chunks of that filing are considered.
    pub fn top_k(
        &self,
        query: &EmbeddingVector,
        k: usize,
        filter: Option<&FilingKey>,
    ) -> Result<Vec<(ChunkRef, f64)>, EmbedError> {
        if query.dimension() != self.dimension {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dimension,
                got: query.dimension(),
            });
        }
        let qn = query.norm();
        if qn == 0.0 {
            return Err(EmbedError::ZeroNorm);
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        // Min-heap on rank quality: the root is the worst retained candidate.
        let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
        for rec in &self.records {
            if let Some(f) = filter {
                if rec.chunk.ticker != f.ticker || rec.chunk.filing_date != f.filing_date {
                    continue;
                }
            }
            let sim = (dot(&rec.vector.values, &query.values) / (rec.norm * qn)).clamp(-1.0, 1.0);
            let cand = Candidate { sim, chunk: &rec.chunk };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand.cmp(worst) == Ordering::Less {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        let mut out = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|c| (c.chunk.clone(), c.sim)).collect())
    }
}

/// Chunks every filing, embeds the chunks in batches and builds the index.
/// Records are added in (filing, chunk) order so the result is deterministic.
pub fn index_filings(
    filings: &[Filing],
    provider: &dyn EmbeddingProvider,
    chunk_chars: usize,
    overlap_chars: usize,
    batch_size: usize,
) -> Result<VectorIndex, EmbedError> {
    let mut index = VectorIndex::new(provider.dimension(), provider.id());
    for filing in filings {
        let chunks = chunk_filing(filing, chunk_chars, overlap_chars)
            .map_err(|e| EmbedError::Chunking(e.to_string()))?;
        for batch in chunks.chunks(batch_size.max(1)) {
            let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
            let vectors = embed_batch(provider, &texts)?;
            for (chunk, vector) in batch.iter().zip(vectors) {
                index.add(ChunkRef::from_chunk(chunk), vector)?;
            }
        }
    }
    Ok(index)
}

/// Orders candidates best-first: `Less` means ranked higher.
struct Candidate<'a> {
    sim: f64,
    chunk: &'a ChunkRef,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .sim
            .total_cmp(&self.sim)
            .then_with(|| self.chunk.order_key().cmp(&other.chunk.order_key()))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}
