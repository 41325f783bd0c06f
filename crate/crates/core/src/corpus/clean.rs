//! Best-effort conversion of EDGAR documents (HTML, inline XBRL, or full
//! submission `.txt` bundles) into plain text.

use std::sync::OnceLock;

use regex::Regex;

/// Elements whose entire subtree is dropped.
const DROPPED_ELEMENTS: &[&str] = &[
    "script", "style", "head", "noscript", "svg", "ix:header", "xbrli:context", "xbrli:unit",
];

/// Elements that end a line of text.
const BLOCK_ELEMENTS: &[&str] = &[
    "p", "div", "br", "tr", "li", "ul", "ol", "table", "h1", "h2", "h3", "h4", "h5", "h6", "hr",
    "section", "article", "center", "body", "html", "blockquote", "pre", "title", "page",
];

/// Table cells are separated by a space so adjacent cells don't fuse.
const CELL_ELEMENTS: &[&str] = &["td", "th"];

/// Shortest whitespace-free run treated as an embedded binary blob.
const BLOB_MIN_LEN: usize = 100;

/// Cleans a raw filing into whitespace-normalised plain text.
///
/// Markup-free input passes through [`normalize_whitespace`] unchanged
/// otherwise. Returns an empty string when nothing textual survives.
pub fn clean_document(raw: &str) -> String {
    let body = extract_primary_document(raw);
    let body = strip_uuencoded(&body);
    let text = if looks_like_markup(&body) { html_to_text(&body) } else { body };
    let text = strip_blobs(&text);
    normalize_whitespace(&text)
}

/// Collapses whitespace runs within each line to one space, trims lines,
/// drops blank lines and joins with `\n`. Non-breaking spaces count as
/// whitespace.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut first = true;
        for word in line.split(|c: char| c.is_whitespace() || c == '\u{a0}').filter(|w| !w.is_empty())
        {
            if first {
                if !out.is_empty() {
                    out.push('\n');
                }
                first = false;
            } else {
                out.push(' ');
            }
            out.push_str(word);
        }
    }
    out
}

/// Full submission files wrap each attachment in `<DOCUMENT>`; keep the
/// 10-K body (or the first document when no 10-K type is present).
fn extract_primary_document(raw: &str) -> String {
    static DOC: OnceLock<Regex> = OnceLock::new();
    let re = DOC.get_or_init(|| Regex::new(r"(?s)<DOCUMENT>(.*?)</DOCUMENT>").unwrap());
    let docs: Vec<&str> = re.captures_iter(raw).map(|c| c.get(1).unwrap().as_str()).collect();
    if docs.is_empty() {
        return raw.to_string();
    }
    let is_10k = |d: &&str| {
        d.lines()
            .find_map(|l| l.trim().strip_prefix("<TYPE>"))
            .is_some_and(|t| t.trim().eq_ignore_ascii_case("10-K"))
    };
    let doc = docs.iter().copied().find(is_10k).unwrap_or(docs[0]);
    match (doc.find("<TEXT>"), doc.rfind("</TEXT>")) {
        (Some(s), Some(e)) if s + 6 <= e => doc[s + 6..e].to_string(),
        _ => doc.to_string(),
    }
}

fn strip_uuencoded(text: &str) -> String {
    static UU: OnceLock<Regex> = OnceLock::new();
    let re = UU.get_or_init(|| Regex::new(r"(?ms)^begin [0-7]{3} \S+\s*$.*?^end\s*$").unwrap());
    re.replace_all(text, "\n").into_owned()
}

fn looks_like_markup(text: &str) -> bool {
    static TAG: OnceLock<Regex> = OnceLock::new();
    let re = TAG.get_or_init(|| {
        Regex::new(r"(?i)<(html|body|div|p|font|table|span|br|ix:[a-z]+|xbrl|td|tr)[\s>/]").unwrap()
    });
    re.is_match(text)
}

fn strip_blobs(text: &str) -> String {
    static BLOB: OnceLock<Regex> = OnceLock::new();
    let re = BLOB.get_or_init(|| {
        Regex::new(&format!(
            r"data:[a-zA-Z/+.-]+;base64,[A-Za-z0-9+/=]*|[A-Za-z0-9+/=]{{{BLOB_MIN_LEN},}}"
        ))
        .unwrap()
    });
    re.replace_all(text, " ").into_owned()
}

struct Tag<'a> {
    name: String,
    attrs: &'a str,
    closing: bool,
    self_closing: bool,
}

/// Parses the tag starting at `s[0] == '<'`. Returns the tag and its byte
/// length, or `None` if this `<` does not open a tag.
fn parse_tag(s: &str) -> Option<(Tag<'_>, usize)> {
    let bytes = s.as_bytes();
    let mut i = 1;
    let closing = bytes.get(i) == Some(&b'/');
    if closing {
        i += 1;
    }
    let name_start = i;
    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b':' | b'-' | b'_'))
    {
        i += 1;
    }
    if i == name_start || !bytes[name_start].is_ascii_alphabetic() {
        return None;
    }
    let name = s[name_start..i].to_ascii_lowercase();
    let attrs_start = i;
    let mut quote: Option<u8> = None;
    while i < bytes.len() {
        match (quote, bytes[i]) {
            (Some(q), b) if b == q => quote = None,
            (None, b'"') | (None, b'\'') => quote = Some(bytes[i]),
            (None, b'>') => {
                let attrs = &s[attrs_start..i];
                let self_closing = attrs.trim_end().ends_with('/');
                return Some((Tag { name, attrs, closing, self_closing }, i + 1));
            }
            _ => {}
        }
        i += 1;
    }
    None
}

fn is_hidden(attrs: &str) -> bool {
    let compact: String =
        attrs.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
    compact.contains("display:none")
}

fn html_to_text(html: &str) -> String {
    let mut out = String::with_capacity(html.len() / 2);
    let mut text_start = 0;
    let mut i = 0;
    // (element name, nesting depth) of a subtree being skipped
    let mut skipping: Option<(String, usize)> = None;

    while let Some(off) = html[i..].find('<') {
        let lt = i + off;
        if skipping.is_none() {
            out.push_str(&decode_entities(&html[text_start..lt]));
        }
        let rest = &html[lt..];
        if let Some(after) = rest.strip_prefix("<!--") {
            let end = after.find("-->").map_or(html.len(), |e| lt + 4 + e + 3);
            i = end;
            text_start = end;
            continue;
        }
        if rest.starts_with("<!") || rest.starts_with("<?") {
            let end = rest.find('>').map_or(html.len(), |e| lt + e + 1);
            i = end;
            text_start = end;
            continue;
        }
        let Some((tag, len)) = parse_tag(rest) else {
            // Literal '<' in text.
            if skipping.is_none() {
                out.push('<');
            }
            i = lt + 1;
            text_start = i;
            continue;
        };
        i = lt + len;
        text_start = i;

        if let Some((name, depth)) = skipping.as_mut() {
            if tag.name == *name && !tag.self_closing {
                if tag.closing {
                    *depth -= 1;
                    if *depth == 0 {
                        skipping = None;
                    }
                } else {
                    *depth += 1;
                }
            }
            continue;
        }
        if !tag.closing
            && !tag.self_closing
            && (DROPPED_ELEMENTS.contains(&tag.name.as_str()) || is_hidden(tag.attrs))
        {
            skipping = Some((tag.name, 1));
            continue;
        }
        if BLOCK_ELEMENTS.contains(&tag.name.as_str()) {
            out.push('\n');
        } else if CELL_ELEMENTS.contains(&tag.name.as_str()) {
            out.push(' ');
        }
    }
    if skipping.is_none() {
        out.push_str(&decode_entities(&html[text_start..]));
    }
    out
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let decoded = rest[1..]
            .find(';')
            .filter(|&semi| semi <= 10)
            .and_then(|semi| decode_entity(&rest[1..1 + semi]).map(|c| (c, semi + 2)));
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_entity(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        "rsquo" => '\u{2019}',
        "lsquo" => '\u{2018}',
        "rdquo" => '\u{201d}',
        "ldquo" => '\u{201c}',
        "mdash" => '\u{2014}',
        "ndash" => '\u{2013}',
        "bull" => '\u{2022}',
        "middot" => '\u{b7}',
        "sect" => '\u{a7}',
        "reg" => '\u{ae}',
        "copy" => '\u{a9}',
        "trade" => '\u{2122}',
        "hellip" => '\u{2026}',
        "cent" => '\u{a2}',
        "pound" => '\u{a3}',
        "euro" => '\u{20ac}',
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_text_is_whitespace_normalized_only() {
        let raw = "  ITEM 1.  BUSINESS\n\n\nThe Company makes   widgets.\r\n  Revenue < 5% of peers. ";
        assert_eq!(clean_document(raw), normalize_whitespace(raw));
        assert_eq!(
            clean_document(raw),
            "ITEM 1. BUSINESS\nThe Company makes widgets.\nRevenue < 5% of peers."
        );
    }

    #[test]
    fn pure_markup_cleans_to_empty() {
        let raw = "<html><head><title>x</title></head><body><div><br/><table><tr><td></td></tr></table></div></body></html>";
        assert_eq!(clean_document(raw), "");
    }

    #[test]
    fn tags_scripts_and_hidden_xbrl_are_removed() {
        let raw = r#"<html><head><style>p{color:red}</style></head><body>
            <div style="display: none"><ix:header><ix:hidden>dei:Secret</ix:hidden></ix:header></div>
            <p>Item&nbsp;1A. <b>Risk</b> Factors</p><script>var x = "<p>no</p>";</script>
            <p>Apple&#8217;s sales &amp; margins</p><!-- a <p>comment</p> -->
            <table><tr><td>Net sales</td><td>$ 1,000</td></tr></table></body></html>"#;
        let clean = clean_document(raw);
        assert_eq!(clean, "Item 1A. Risk Factors\nApple\u{2019}s sales & margins\nNet sales $ 1,000");
    }

    #[test]
    fn nested_dropped_subtree_is_balanced() {
        let raw = "<div>keep</div><div style='display:none'><div>inner</div>hidden</div><p>after</p>";
        assert_eq!(clean_document(raw), "keep\nafter");
    }

    #[test]
    fn base64_and_uuencode_blobs_are_removed() {
        let blob = "QUJD".repeat(40);
        let raw = format!(
            "<p>Text before</p><img src=\"data:image/png;base64,{blob}\"><p>{blob}</p>\nbegin 644 chart.jpg\nM_]C_X``02D9)1@`!`0$`8`!@``#_\nend\n<p>Text after</p>"
        );
        assert_eq!(clean_document(&raw), "Text before\nText after");
    }

    #[test]
    fn full_submission_prefers_10k_document() {
        let raw = "<SEC-DOCUMENT>\n<DOCUMENT>\n<TYPE>EX-21\n<TEXT>\nSubsidiaries list\n</TEXT>\n</DOCUMENT>\n\
                   <DOCUMENT>\n<TYPE>10-K\n<SEQUENCE>1\n<TEXT>\n<html><body><p>Annual report body</p></body></html>\n</TEXT>\n</DOCUMENT>\n";
        assert_eq!(clean_document(raw), "Annual report body");
    }

    #[test]
    fn unknown_entities_survive_literally() {
        assert_eq!(decode_entities("AT&T &foo; &#65;"), "AT&T &foo; A");
    }
}
