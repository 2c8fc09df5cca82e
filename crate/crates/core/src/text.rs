//! Tokenization and mention parsing.

use std::collections::BTreeSet;

/// Characters that are kept inside a token besides alphanumerics and `_`.
const INNER: [char; 4] = ['@', '#', '.', '-'];

/// Splits `text` into lowercased terms.
///
/// Separators are whitespace and punctuation, except `@`, `#`, `.` and `-`,
/// which stay part of a token so that `bit.ly` or `twitpic.com` survive as
/// single terms. Leading and trailing `.`/`-` are trimmed.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_' || INNER.contains(&c)))
        .map(|tok| tok.trim_matches(|c| c == '.' || c == '-'))
        .filter(|tok| !tok.is_empty() && tok.chars().any(|c| c.is_alphanumeric()))
        .map(str::to_lowercase)
}

/// Distinct terms of `text`.
pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).collect()
}

/// `@username` mentions in order of first appearance, lowercased, without
/// duplicates. A username is a run of `[A-Za-z0-9_]`.
pub fn extract_mentions(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'@' {
            let start = i + 1;
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            if end > start {
                let name = text[start..end].to_ascii_lowercase();
                if !out.contains(&name) {
                    out.push(name);
                }
            }
            i = end.max(start);
        } else {
            i += 1;
        }
    }
    out
}
