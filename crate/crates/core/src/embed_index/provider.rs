use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingVector};
use crate::net::{HttpClient, HttpError};

pub const DEFAULT_STUB_DIM: usize = 64;

/// A text embedding backend. Raw outputs need not be normalised.
pub trait EmbeddingProvider {
    /// Names the provider and model revision; stored in the index header.
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Embeds one text and normalises it to unit length.
pub fn embed_text(
    provider: &dyn EmbeddingProvider,
    text: &str,
) -> Result<EmbeddingVector, EmbedError> {
    Ok(embed_batch(provider, &[text])?.remove(0))
}

pub fn embed_batch(
    provider: &dyn EmbeddingProvider,
    texts: &[&str],
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(EmbedError::EmptyText);
    }
    let raw = provider.embed_raw(texts)?;
    if raw.len() != texts.len() {
        return Err(EmbedError::Provider {
            message: format!("{} vectors returned for {} texts", raw.len(), texts.len()),
            retriable: false,
        });
    }
    let dim = provider.dimension();
    raw.iter()
        .map(|r| {
            if r.len() != dim {
                return Err(EmbedError::DimensionMismatch { expected: dim, got: r.len() });
            }
            EmbeddingVector::normalized(r)
        })
        .collect()
}

/// Deterministic offline embedder: each lowercase alphanumeric token (minus
/// a few stopwords) is hashed into one of `dim` buckets with a signed weight.
/// Texts sharing tokens get positive cosine similarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashStubProvider {
    dim: usize,
    seed: u64,
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "in", "is", "it",
    "its", "of", "on", "or", "that", "the", "this", "to", "was", "were", "with", "any", "there",
];

impl HashStubProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim, seed }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        for token in lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !STOPWORDS.contains(t))
        {
            let h = fnv1a(self.seed, token.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            let weight = 1.0 + ((h >> 32) & 0xff) as f64 / 255.0;
            v[bucket] += sign * weight;
        }
        v
    }
}

impl Default for HashStubProvider {
    fn default() -> Self {
        Self::new(DEFAULT_STUB_DIM, 0)
    }
}

impl EmbeddingProvider for HashStubProvider {
    fn id(&self) -> String {
        format!("hash-stub:d{}:s{}", self.dim, self.seed)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    seed.to_le_bytes()
        .iter()
        .chain(bytes)
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Embedding service reached over HTTP.
///
/// Request: `{"model": "...", "input": ["text", ...]}`. The response may be
/// either `{"embeddings": [[...], ...]}` or the OpenAI-style
/// `{"data": [{"embedding": [...]}, ...]}`.
#[derive(Debug)]
pub struct HttpEmbeddingProvider {
    endpoint: String,
    model: String,
    dim: usize,
    client: HttpClient,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EmbedResponse {
    Plain { embeddings: Vec<Vec<f64>> },
    Data { data: Vec<DataItem> },
}

#[derive(Deserialize)]
struct DataItem {
    embedding: Vec<f64>,
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: &str, model: &str, dim: usize, api_key: Option<&str>) -> Self {
        let mut client = HttpClient::new(Duration::from_secs(120))
            .with_retries(3, Duration::from_millis(500));
        if let Some(key) = api_key.filter(|k| !k.is_empty()) {
            client = client.with_header("Authorization", format!("Bearer {key}"));
        }
        Self { endpoint: endpoint.into(), model: model.into(), dim, client }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn id(&self) -> String {
        format!("http:{}:d{}", self.model, self.dim)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let req = EmbedRequest { model: &self.model, input: texts };
        let resp: EmbedResponse = self.client.post_json(&self.endpoint, &req).map_err(|e| {
            let retriable = match &e {
                HttpError::Transport(_) => true,
                HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            };
            EmbedError::Provider { message: e.to_string(), retriable }
        })?;
        Ok(match resp {
            EmbedResponse::Plain { embeddings } => embeddings,
            EmbedResponse::Data { data } => data.into_iter().map(|d| d.embedding).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_index::cosine_similarity;

    #[test]
    fn stub_is_deterministic_and_unit_norm() {
        let p = HashStubProvider::new(64, 42);
        let a = embed_text(&p, "alpha").unwrap();
        let b = embed_text(&p, "alpha").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert_eq!(a.dimension(), 64);
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let p = HashStubProvider::default();
        let q = embed_text(&p, "revenue growth strategy").unwrap();
        let near = embed_text(&p, "record revenue growth this year").unwrap();
        let far = embed_text(&p, "pending litigation against directors").unwrap();
        assert!(cosine_similarity(&q, &near).unwrap() > cosine_similarity(&q, &far).unwrap());
    }

    #[test]
    fn seed_changes_the_embedding() {
        let a = embed_text(&HashStubProvider::new(64, 1), "liquidity").unwrap();
        let b = embed_text(&HashStubProvider::new(64, 2), "liquidity").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn empty_or_tokenless_text_fails() {
        let p = HashStubProvider::default();
        assert!(matches!(embed_text(&p, "  "), Err(EmbedError::EmptyText)));
        assert!(matches!(embed_text(&p, "the of and"), Err(EmbedError::ZeroNorm)));
    }

    struct WrongDim;
    impl EmbeddingProvider for WrongDim {
        fn id(&self) -> String {
            "wrong".into()
        }
        fn dimension(&self) -> usize {
            4
        }
        fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
            Ok(texts.iter().map(|_| vec![1.0, 2.0, 3.0]).collect())
        }
    }

    #[test]
    fn provider_dimension_is_checked() {
        assert!(matches!(
            embed_text(&WrongDim, "x"),
            Err(EmbedError::DimensionMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn response_shapes_parse() {
        let plain: EmbedResponse = serde_json::from_str(r#"{"embeddings": [[1, 2]]}"#).unwrap();
        assert!(matches!(plain, EmbedResponse::Plain { .. }));
        let data: EmbedResponse =
            serde_json::from_str(r#"{"data": [{"embedding": [0.5, 0.1], "index": 0}]}"#).unwrap();
        assert!(matches!(data, EmbedResponse::Data { .. }));
    }
}
