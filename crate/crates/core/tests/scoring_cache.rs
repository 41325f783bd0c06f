use std::sync::atomic::{AtomicUsize, Ordering};

use arsignal::embed_index::{index_filings, HashStubProvider};
use arsignal::llm_scoring::{
    parse_score, score_filings, KeywordRule, KeywordStub, Question, ScoreCache, ScoringError,
    ScoringOptions,
};
use arsignal::{Filing, FeatureTable, LlmProvider, QuestionSet};
use chrono::NaiveDate;

struct Counting<P> {
    inner: P,
    calls: AtomicUsize,
}

impl<P: LlmProvider> LlmProvider for Counting<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, ScoringError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(system, user)
    }
}

fn filing(ticker: &str, text: &str) -> Filing {
    Filing {
        ticker: ticker.into(),
        cik: "0000000001".into(),
        accession_id: format!("acc-{ticker}"),
        filing_date: NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
        raw_uri: "file://x".into(),
        clean_text: text.into(),
    }
}

fn questions() -> QuestionSet {
    QuestionSet::new(
        "t1",
        vec![
            Question { id: "growth".into(), text: "How strong is revenue growth?".into() },
            Question { id: "risk".into(), text: "How severe are the risk factors?".into() },
        ],
    )
    .unwrap()
}

fn stub() -> Counting<KeywordStub> {
    Counting {
        inner: KeywordStub {
            rules: vec![KeywordRule { phrase: "record revenue".into(), score: 90 }],
            default: 20,
        },
        calls: AtomicUsize::new(0),
    }
}

fn run(filings: &[Filing], llm: &Counting<KeywordStub>, cache: &ScoreCache) -> FeatureTable {
    let embedder = HashStubProvider::new(32, 0);
    let index = index_filings(filings, &embedder, 200, 20, 8).unwrap();
    let opts = ScoringOptions { max_in_flight: 2, ..Default::default() };
    let (table, failures) = score_filings(filings, &questions(), &index, &embedder, llm, cache, &opts).unwrap();
    assert!(failures.is_empty(), "{failures:?}");
    table
}

#[test]
fn warm_cache_makes_no_model_calls() {
    let filings = [
        filing("UP", "We achieved record revenue this year across all segments."),
        filing("FLAT", "Sales were unchanged and margins were stable."),
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");

    let cold = stub();
    let first = run(&filings, &cold, &ScoreCache::open(&path).unwrap());
    assert_eq!(cold.calls.load(Ordering::SeqCst), 4);
    assert_eq!(first.rows.iter().map(|r| r.scores.clone()).collect::<Vec<_>>(), vec![vec![20, 20], vec![90, 90]]);

    let warm = stub();
    let reopened = ScoreCache::open(&path).unwrap();
    assert_eq!(reopened.len(), 4);
    let second = run(&filings, &warm, &reopened);
    assert_eq!(warm.calls.load(Ordering::SeqCst), 0);
    assert_eq!(first, second);
}

#[test]
fn new_question_version_misses_the_cache() {
    let filings = [filing("UP", "We achieved record revenue this year.")];
    let cache = ScoreCache::in_memory();
    let llm = stub();
    run(&filings, &llm, &cache);
    let embedder = HashStubProvider::new(32, 0);
    let index = index_filings(&filings, &embedder, 200, 20, 8).unwrap();
    let mut qs = questions();
    qs.version = "t2".into();
    score_filings(&filings, &qs, &index, &embedder, &llm, &cache, &ScoringOptions::default()).unwrap();
    assert_eq!(llm.calls.load(Ordering::SeqCst), 4);
}

#[test]
fn score_parsing() {
    assert_eq!(parse_score("SCORE: 73").unwrap(), 73);
    assert_eq!(parse_score("Reasoning first.\n**Score:** 8").unwrap(), 8);
    assert_eq!(parse_score("I'd say 55 out of 100").unwrap(), 55);
    assert!(parse_score("SCORE: 140").is_err());
    assert!(parse_score("no number here").is_err());
}
