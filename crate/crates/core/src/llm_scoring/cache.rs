use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ScoredAnswer, ScoringError};

/// One cached answer: a [`ScoredAnswer`] plus the provider and question-set
/// version it was produced under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedAnswer {
    pub provider_id: String,
    pub questions_version: String,
    #[serde(flatten)]
    pub answer: ScoredAnswer,
}

type CacheKey = (String, chrono::NaiveDate, String, String, String);

fn key_of(a: &CachedAnswer) -> CacheKey {
    (
        a.answer.filing_key.ticker.clone(),
        a.answer.filing_key.filing_date,
        a.answer.question_id.clone(),
        a.provider_id.clone(),
        a.questions_version.clone(),
    )
}

struct Inner {
    entries: HashMap<CacheKey, CachedAnswer>,
    file: Option<File>,
}

/// JSONL-backed answer cache. Concurrent lookups, serialized appends.
pub struct ScoreCache {
    inner: Mutex<Inner>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self { inner: Mutex::new(Inner { entries: HashMap::new(), file: None }) }
    }

    /// Loads existing entries from `path` (if present) and appends new ones.
    pub fn open(path: &Path) -> Result<Self, ScoringError> {
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CachedAnswer = serde_json::from_str(&line)?;
                entries.insert(key_of(&rec), rec);
            }
        } else if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { inner: Mutex::new(Inner { entries, file: Some(file) }) })
    }

    pub fn get(
        &self,
        filing_key: &crate::FilingKey,
        question_id: &str,
        provider_id: &str,
        questions_version: &str,
    ) -> Option<ScoredAnswer> {
        let key = (
            filing_key.ticker.clone(),
            filing_key.filing_date,
            question_id.to_string(),
            provider_id.to_string(),
            questions_version.to_string(),
        );
        let inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        inner.entries.get(&key).map(|c| c.answer.clone())
    }

    pub fn put(&self, entry: CachedAnswer) -> Result<(), ScoringError> {
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&entry)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
        }
        inner.entries.insert(key_of(&entry), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::FilingKey;

    fn entry(provider: &str) -> CachedAnswer {
        CachedAnswer {
            provider_id: provider.into(),
            questions_version: "v1".into(),
            answer: ScoredAnswer {
                filing_key: FilingKey::new("ACME", chrono::NaiveDate::from_ymd_opt(2020, 2, 3).unwrap()),
                question_id: "growth".into(),
                score: 77,
                raw_response: "SCORE: 77".into(),
                context_chunk_refs: vec!["ACME@2020-02-03#0".into()],
            },
        }
    }

    #[test]
    fn persisted_entries_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = ScoreCache::open(&path).unwrap();
            cache.put(entry("p1")).unwrap();
        }
        let cache = ScoreCache::open(&path).unwrap();
        let key = entry("p1").answer.filing_key;
        assert_eq!(cache.get(&key, "growth", "p1", "v1").unwrap().score, 77);
        assert!(cache.get(&key, "growth", "p2", "v1").is_none());
        assert!(cache.get(&key, "growth", "p1", "v2").is_none());
    }
}
