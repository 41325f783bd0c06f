use std::fmt::Write;
use std::sync::OnceLock;

use regex::Regex;

use super::ScoringError;
use crate::corpus::Chunk;

pub const SCORE_MARKER: &str = "SCORE:";

pub const SYSTEM_PROMPT: &str = "You are an equity analyst reading excerpts from a company's \
annual report (Form 10-K). Answer the user's question using only the provided context; do not \
rely on outside knowledge. Express your answer as a confidence score: a single integer from 0 \
to 100, where 100 means the evidence is maximally favorable for the company's shareholders and \
0 means maximally unfavorable. If the context does not address the question, answer 50. Put the \
score on its own line in the form \"SCORE: <n>\".";

/// Builds the (system, user) prompt pair. Chunks are labelled in retrieval
/// order and precede the question.
pub fn build_prompt(question: &str, context_chunks: &[Chunk]) -> (String, String) {
    let mut user = String::from("Context from the annual report:\n\n");
    for (i, chunk) in context_chunks.iter().enumerate() {
        let _ = writeln!(
            user,
            "[Excerpt {} | {} | chunk {}]\n{}\n",
            i + 1,
            chunk.filing_key,
            chunk.chunk_index,
            chunk.text.trim()
        );
    }
    let _ = write!(user, "Question: {}\n\nRespond with {SCORE_MARKER} <n>.", question.trim());
    (SYSTEM_PROMPT.to_string(), user)
}

/// Extracts a 0-100 score from a model response.
///
/// The integer after the first `SCORE:` marker wins; without one, the first
/// standalone integer in `0..=100` is used. Out-of-range marker values are
/// errors, never clamped.
pub fn parse_score(raw: &str) -> Result<u8, ScoringError> {
    static MARKER: OnceLock<Regex> = OnceLock::new();
    let marker = MARKER.get_or_init(|| Regex::new(r"(?i)SCORE:\s*\**\s*(-?\d+(?:\.\d+)?)").unwrap());
    let unparseable = || ScoringError::UnparseableScore { raw: raw.to_string() };

    if let Some(c) = marker.captures(raw) {
        let value = &c[1];
        return match value.parse::<i64>() {
            Ok(v) if (0..=100).contains(&v) => Ok(v as u8),
            _ => Err(unparseable()),
        };
    }
    standalone_integers(raw)
        .into_iter()
        .find(|v| (0..=100).contains(v))
        .map(|v| v as u8)
        .ok_or_else(unparseable)
}

/// Integers not embedded in words or decimals. A leading `-` makes the value
/// negative.
fn standalone_integers(s: &str) -> Vec<i64> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let prev = start.checked_sub(1).map(|p| chars[p]);
        let next = chars.get(i).copied();
        let next2 = chars.get(i + 1).copied();
        let glued_before = prev.is_some_and(|c| c.is_alphanumeric() || c == '.' || c == ',');
        let glued_after = next.is_some_and(|c| c.is_alphanumeric())
            || (matches!(next, Some('.') | Some(',')) && next2.is_some_and(|c| c.is_ascii_digit()));
        if glued_before || glued_after {
            continue;
        }
        let digits: String = chars[start..i].iter().collect();
        if let Ok(mut v) = digits.parse::<i64>() {
            if prev == Some('-') {
                v = -v;
            }
            out.push(v);
        }
    }
    out
}
