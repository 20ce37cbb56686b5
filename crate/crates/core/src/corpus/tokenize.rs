//! Reference word tokenizer.
//!
//! Lowercases, splits on Unicode whitespace and strips leading/trailing
//! punctuation from every piece. Pieces that are all punctuation vanish.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Byte offset of the first character in the source text.
    pub start: usize,
    /// Byte offset one past the last character in the source text.
    pub end: usize,
}

/// Returns true for characters stripped from token edges.
///
/// ASCII punctuation plus the common typographic marks. Combining marks are
/// left alone so that re-tokenizing lowercased output is a no-op.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{00A1}' // ¡
                | '\u{00AB}' // «
                | '\u{00B7}' // ·
                | '\u{00BB}' // »
                | '\u{00BF}' // ¿
                | '\u{2010}'..='\u{2027}' // dashes, quotes, bullets, ellipsis
                | '\u{2030}'..='\u{205E}'
                | '\u{3001}'..='\u{3003}'
                | '\u{300C}'..='\u{300F}'
        )
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    for (offset, piece) in split_whitespace_indices(text) {
        let trimmed_front = piece.trim_start_matches(is_punctuation);
        let trimmed = trimmed_front.trim_end_matches(is_punctuation);
        if trimmed.is_empty() {
            continue;
        }
        let start = offset + (piece.len() - trimmed_front.len());
        let end = start + trimmed.len();
        tokens.push(Token {
            text: trimmed.to_lowercase(),
            start,
            end,
        });
    }
    tokens
}

/// Token strings only.
pub fn tokenize_terms(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

pub fn token_count(text: &str) -> usize {
    split_whitespace_indices(text)
        .filter(|(_, piece)| {
            !piece
                .trim_matches(is_punctuation)
                .is_empty()
        })
        .count()
}

fn split_whitespace_indices(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest_start = 0;
    std::iter::from_fn(move || {
        let rest = &text[rest_start..];
        let lead = rest.len() - rest.trim_start().len();
        let begin = rest_start + lead;
        if begin >= text.len() {
            rest_start = text.len();
            return None;
        }
        let piece_len = text[begin..]
            .find(char::is_whitespace)
            .unwrap_or(text.len() - begin);
        rest_start = begin + piece_len;
        Some((begin, &text[begin..begin + piece_len]))
    })
}
