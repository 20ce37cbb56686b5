//! Rule-based sentence splitter.
//!
//! A sentence ends at a run of `.`, `!` or `?` (optionally followed by closing
//! quotes or brackets) that is followed by whitespace or the end of the text.
//! A period ending a word from the abbreviation stop-list is not a boundary.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const ABBREVIATIONS: &str = include_str!("../../data/abbreviations.txt");

/// Byte span of one sentence, trimmed of surrounding whitespace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
}

impl SentenceSpan {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATIONS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201D}' | '\u{2019}' | '\u{00BB}')
}

/// The word immediately preceding byte `dot` (exclusive), lowercased and
/// stripped of opening punctuation.
fn preceding_word(text: &str, dot: usize) -> String {
    let head = &text[..dot];
    let start = head
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    head[start..]
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let abbrev = abbreviations();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut sentence_start: Option<usize> = None;
    let mut i = 0;

    while i < chars.len() {
        let (pos, c) = chars[i];
        if sentence_start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            sentence_start = Some(pos);
        }
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        // Consume the whole terminator run and any closing marks.
        let mut j = i;
        while j < chars.len() && is_terminator(chars[j].1) {
            j += 1;
        }
        let run_is_single_period = j == i + 1 && c == '.';
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
        let abbreviated = run_is_single_period && abbrev.contains(preceding_word(text, pos).as_str());
        if at_boundary && !abbreviated {
            let end = if j == chars.len() { text.len() } else { chars[j].0 };
            spans.push(SentenceSpan {
                start: sentence_start.take().expect("sentence open"),
                end,
            });
        }
        i = j.max(i + 1);
    }

    if let Some(start) = sentence_start {
        let end = start + text[start..].trim_end().len();
        spans.push(SentenceSpan { start, end });
    }
    spans
}

/// Sentence texts, in order.
pub fn sentences(text: &str) -> Vec<&str> {
    split_sentences(text).iter().map(|s| s.slice(text)).collect()
}
