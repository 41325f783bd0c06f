//! Question-driven feature extraction: retrieve context for each question,
//! ask an LLM for a 0-100 score, and assemble one feature row per filing.

mod cache;
mod prompt;
mod provider;
mod scorer;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CachedAnswer, ScoreCache};
pub use prompt::{build_prompt, parse_score, SCORE_MARKER, SYSTEM_PROMPT};
pub use provider::{ConstantStub, HttpChatProvider, KeywordRule, KeywordStub, LlmProvider};
pub use scorer::{score_filing, score_filings, ScoreFailure, ScoringOptions};

use crate::embed_index::EmbedError;
use crate::key::parse_date;
use crate::FilingKey;

const DEFAULT_QUESTIONS_JSON: &str = include_str!("../../data/questions_v1.json");

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("no score in response: {raw:?}")]
    UnparseableScore { raw: String },
    #[error("LLM provider failed: {message}")]
    Provider { message: String, retriable: bool },
    #[error("invalid question set: {0}")]
    InvalidQuestionSet(String),
    #[error("no indexed chunks for filing {0}")]
    NoContext(String),
    #[error("malformed feature table: {0}")]
    FeatureTable(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

/// Ordered questions; the order defines the feature column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub version: String,
    pub questions: Vec<Question>,
}

impl QuestionSet {
    pub fn new(version: impl Into<String>, questions: Vec<Question>) -> Result<Self, ScoringError> {
        let qs = Self { version: version.into(), questions };
        qs.validate()?;
        Ok(qs)
    }

    /// The bundled 27-question set.
    pub fn default_set() -> Self {
        Self::from_json(DEFAULT_QUESTIONS_JSON).expect("bundled question set is valid")
    }

    pub fn from_json(json: &str) -> Result<Self, ScoringError> {
        let qs: QuestionSet = serde_json::from_str(json)?;
        qs.validate()?;
        Ok(qs)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScoringError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), ScoringError> {
        if self.questions.is_empty() {
            return Err(ScoringError::InvalidQuestionSet("no questions".into()));
        }
        let mut seen = HashSet::new();
        for q in &self.questions {
            let valid_id = !q.id.is_empty()
                && q.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !valid_id {
                return Err(ScoringError::InvalidQuestionSet(format!("bad question id {:?}", q.id)));
            }
            if q.text.trim().is_empty() {
                return Err(ScoringError::InvalidQuestionSet(format!("question {} is empty", q.id)));
            }
            if !seen.insert(q.id.as_str()) {
                return Err(ScoringError::InvalidQuestionSet(format!("duplicate id {}", q.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.questions.iter().map(|q| q.id.clone()).collect()
    }
}

/// One LLM answer with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub filing_key: FilingKey,
    pub question_id: String,
    pub score: u8,
    pub raw_response: String,
    pub context_chunk_refs: Vec<String>,
}

/// All question scores for one filing, aligned with the question set order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureRow {
    pub filing_key: FilingKey,
    pub scores: Vec<u8>,
}

/// Feature matrix as written to `features.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureTable {
    pub question_ids: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(question_ids: Vec<String>) -> Self {
        Self { question_ids, rows: Vec::new() }
    }

    /// Column names as they appear in the CSV header (`q_<id>`).
    pub fn feature_names(&self) -> Vec<String> {
        self.question_ids.iter().map(|id| format!("q_{id}")).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ScoringError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["ticker".to_string(), "filing_date".to_string()];
        header.extend(self.feature_names());
        w.write_record(&header)?;
        let mut rows: Vec<&FeatureRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.filing_key.cmp(&b.filing_key));
        for row in rows {
            let mut rec = vec![row.filing_key.ticker.clone(), row.filing_key.filing_date.to_string()];
            rec.extend(row.scores.iter().map(u8::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, ScoringError> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "ticker" || &header[1] != "filing_date" {
            return Err(ScoringError::FeatureTable(
                "header must start with ticker,filing_date followed by q_<id> columns".into(),
            ));
        }
        let question_ids = header
            .iter()
            .skip(2)
            .map(|h| {
                h.strip_prefix("q_")
                    .map(str::to_string)
                    .ok_or_else(|| ScoringError::FeatureTable(format!("column {h:?} lacks q_ prefix")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut table = Self::new(question_ids);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |m: String| ScoringError::FeatureTable(format!("row {}: {m}", i + 1));
            if rec.len() != header.len() {
                return Err(bad(format!("{} fields, expected {}", rec.len(), header.len())));
            }
            let filing_date = parse_date(&rec[1]).map_err(|e| bad(e.to_string()))?;
            let scores = rec
                .iter()
                .skip(2)
                .map(|s| match s.trim().parse::<u8>() {
                    Ok(v) if v <= 100 => Ok(v),
                    _ => Err(bad(format!("score {s:?} not in 0..=100"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            table.rows.push(FeatureRow { filing_key: FilingKey::new(&rec[0], filing_date), scores });
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_set_has_27_unique_questions() {
        let qs = QuestionSet::default_set();
        assert_eq!(qs.len(), 27);
        assert!(qs.questions[0].text.contains(
            "Does the company have a clear strategy for growth and innovation?"
        ));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let q = Question { id: "a".into(), text: "x?".into() };
        assert!(QuestionSet::new("v", vec![q.clone(), q]).is_err());
        assert!(QuestionSet::new("v", vec![]).is_err());
        let bad = Question { id: "has space".into(), text: "x?".into() };
        assert!(QuestionSet::new("v", vec![bad]).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let mut t = FeatureTable::new(vec!["growth".into(), "risk".into()]);
        let d = parse_date("2019-03-04").unwrap();
        t.rows.push(FeatureRow { filing_key: FilingKey::new("ZZ", d), scores: vec![10, 100] });
        t.rows.push(FeatureRow { filing_key: FilingKey::new("AA", d), scores: vec![0, 55] });
        t.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "ticker,filing_date,q_growth,q_risk\nAA,2019-03-04,0,55\nZZ,2019-03-04,10,100\n");
        let back = FeatureTable::read_csv(&path).unwrap();
        assert_eq!(back.question_ids, t.question_ids);
        assert_eq!(back.rows[0].scores, vec![0, 55]);
    }

    #[test]
    fn out_of_range_scores_are_rejected_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "ticker,filing_date,q_a\nAA,2019-03-04,101\n").unwrap();
        assert!(FeatureTable::read_csv(&path).is_err());
    }
}
