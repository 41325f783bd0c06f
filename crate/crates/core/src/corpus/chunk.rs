use super::{Chunk, CorpusError, Filing};

pub const DEFAULT_CHUNK_CHARS: usize = 2048;
pub const DEFAULT_OVERLAP_CHARS: usize = 256;

/// Splits a filing's clean text into overlapping chunks.
///
/// Sizes are counted in characters; spans are byte offsets. Consecutive
/// chunks share exactly `overlap_chars` characters. A chunk end is moved
/// back to just after a whitespace character when one lies within the last
/// `overlap_chars` characters of the chunk, never so far that the next chunk
/// would fail to advance.
pub fn chunk_filing(
    filing: &Filing,
    chunk_chars: usize,
    overlap_chars: usize,
) -> Result<Vec<Chunk>, CorpusError> {
    let spans = chunk_text(&filing.clean_text, chunk_chars, overlap_chars)?;
    let key = filing.key();
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(chunk_index, (start, end))| Chunk {
            filing_key: key.clone(),
            chunk_index,
            text: filing.clean_text[start..end].to_string(),
            char_span: (start, end),
        })
        .collect())
}

/// Computes chunk byte spans for `text`. See [`chunk_filing`].
pub fn chunk_text(
    text: &str,
    chunk_chars: usize,
    overlap_chars: usize,
) -> Result<Vec<(usize, usize)>, CorpusError> {
    if chunk_chars == 0 || overlap_chars >= chunk_chars {
        return Err(CorpusError::InvalidChunkParams { size: chunk_chars, overlap: overlap_chars });
    }
    // Byte offset of every char boundary, including the end of the text.
    let bounds: Vec<usize> =
        text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len())).collect();
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();

    let mut spans = Vec::new();
    let mut start = 0usize;
    while start < n {
        if n - start <= chunk_chars {
            spans.push((bounds[start], bounds[n]));
            break;
        }
        let hard_end = start + chunk_chars;
        let floor = (hard_end - overlap_chars).max(start + overlap_chars + 1);
        let end = (floor..=hard_end)
            .rev()
            .find(|&e| chars[e - 1].is_whitespace())
            .unwrap_or(hard_end);
        spans.push((bounds[start], bounds[end]));
        start = end - overlap_chars;
    }
    Ok(spans)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts<'a>(text: &'a str, spans: &[(usize, usize)]) -> Vec<&'a str> {
        spans.iter().map(|&(s, e)| &text[s..e]).collect()
    }

    #[test]
    fn fixed_width_without_whitespace() {
        let text = "abcdefghij";
        let spans = chunk_text(text, 4, 0).unwrap();
        assert_eq!(texts(text, &spans), ["abcd", "efgh", "ij"]);
    }

    #[test]
    fn short_text_is_one_chunk() {
        let text = "short filing";
        assert_eq!(chunk_text(text, 2048, 256).unwrap(), vec![(0, text.len())]);
    }

    #[test]
    fn empty_text_has_no_chunks() {
        assert!(chunk_text("", 10, 2).unwrap().is_empty());
    }

    #[test]
    fn overlap_must_be_smaller_than_chunk() {
        assert!(matches!(chunk_text("abc", 4, 4), Err(CorpusError::InvalidChunkParams { .. })));
        assert!(matches!(chunk_text("abc", 0, 0), Err(CorpusError::InvalidChunkParams { .. })));
    }

    #[test]
    fn snaps_to_whitespace_inside_overlap_window() {
        let text = "aaaa bbbb cccc dddd";
        let spans = chunk_text(text, 8, 3).unwrap();
        let parts = texts(text, &spans);
        assert_eq!(parts, ["aaaa ", "aa bbbb ", "bb cccc ", "cc dddd"]);
    }

    #[test]
    fn multibyte_text_splits_on_char_boundaries() {
        let text = "ééééé ñññññ üüüüü";
        let spans = chunk_text(text, 4, 1).unwrap();
        for &(s, e) in &spans {
            assert!(text.is_char_boundary(s) && text.is_char_boundary(e) && s < e);
        }
        assert_eq!(spans.last().unwrap().1, text.len());
    }
}
