use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

fn articles() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"))
}

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the and
/// collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    articles()
        .replace_all(&lower, " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn f1_single(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let p: Vec<&str> = p.split_whitespace().collect();
    let g: Vec<&str> = g.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p == g { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Bag-of-tokens F1 after normalization, maximized over `golds`
/// (0 when there are none).
pub fn token_f1(prediction: &str, golds: &[String]) -> f64 {
    golds.iter().map(|g| f1_single(prediction, g)).fold(0.0, f64::max)
}

/// 1 if any non-empty normalized gold occurs inside the normalized
/// prediction.
pub fn lenient_em(prediction: &str, golds: &[String]) -> f64 {
    let p = normalize_answer(prediction);
    let hit = golds.iter().any(|g| {
        let g = normalize_answer(g);
        !g.is_empty() && p.contains(&g)
    });
    if hit {
        1.0
    } else {
        0.0
    }
}

/// Ordered regexes whose first capture group is the predicted label.
#[derive(Debug, Clone)]
pub struct AnswerPatterns {
    patterns: Vec<Regex>,
}

impl AnswerPatterns {
    pub fn new(patterns: &[&str]) -> crate::Result<Self> {
        let patterns = patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|e| crate::Error::invalid(format!("bad answer pattern `{p}`: {e}"))))
            .collect::<crate::Result<_>>()?;
        Ok(Self { patterns })
    }

    /// Option letters A to E, stated as "the answer is X", a leading
    /// letter, or a parenthesized letter.
    pub fn multiple_choice() -> Self {
        Self::new(&[
            r"(?i:answer\s+is)\s*:?\s*\(?([A-E])\b",
            r"^\s*\(?([A-E])(?:[.):,]|\s|$)",
            r"\(([A-E])\)",
        ])
        .expect("valid built-in patterns")
    }

    pub fn true_false() -> Self {
        Self::new(&[r"(?i)answer\s+is\s*:?\s*(true|false)\b", r"(?i)\b(true|false)\b"])
            .expect("valid built-in patterns")
    }

    pub fn extract<'a>(&self, text: &'a str) -> Option<&'a str> {
        self.patterns
            .iter()
            .find_map(|re| re.captures(text).and_then(|c| c.get(1)).map(|m| m.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub correct: bool,
    /// `None` when no pattern matched.
    pub extracted: Option<String>,
}

impl Extraction {
    pub fn score(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

/// Extracts a label from `prediction` with the first matching pattern and
/// compares it to `gold` ignoring case.
pub fn accuracy_with_extraction(prediction: &str, gold: &str, patterns: &AnswerPatterns) -> Extraction {
    let extracted = patterns.extract(prediction);
    Extraction {
        correct: extracted.is_some_and(|e| e.trim().eq_ignore_ascii_case(gold.trim())),
        extracted: extracted.map(str::to_string),
    }
}
