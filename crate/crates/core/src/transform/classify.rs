use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use log::warn;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Query;
use crate::client::{ChatClient, ChatRequest, ClientError};
use crate::corpus::token_count;
use crate::error::Result;
use crate::templates::TemplateSet;

const DEFAULT_TASK_TABLE: &str = include_str!("../../data/task_table.json");
/// Quoted passages at least this long count as self-contained input.
pub const QUOTED_BLOCK_MIN_TOKENS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sufficiency {
    /// The request carries what it needs; skip retrieval.
    Sufficient,
    Insufficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionSource {
    Rule,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationDecision {
    pub label: Sufficiency,
    pub source: DecisionSource,
    pub confidence: f64,
}

impl ClassificationDecision {
    pub fn needs_retrieval(&self) -> bool {
        self.label == Sufficiency::Insufficient
    }
}

pub trait QueryClassifier: Send + Sync {
    fn classify(&self, query: &Query) -> std::result::Result<ClassificationDecision, ClientError>;
}

/// Classifies, falling back to "insufficient" (retrieve) when the
/// classifier backend fails. The second element carries the failure.
pub fn classify_query(
    query: &Query,
    classifier: &dyn QueryClassifier,
) -> (ClassificationDecision, Option<ClientError>) {
    match classifier.classify(query) {
        Ok(d) => (d, None),
        Err(e) => {
            warn!("classifier failed for query {}: {e}; retrieving", query.id);
            (
                ClassificationDecision {
                    label: Sufficiency::Insufficient,
                    source: DecisionSource::Remote,
                    confidence: 0.0,
                },
                Some(e),
            )
        }
    }
}

/// Task label → sufficiency lookup, loaded from JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskTable(pub BTreeMap<String, Sufficiency>);

impl Default for TaskTable {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_TASK_TABLE).expect("bundled task table parses")
    }
}

impl TaskTable {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn lookup(&self, label: &str) -> Option<Sufficiency> {
        let key = label.trim().to_lowercase().replace([' ', '-'], "_");
        self.0.get(&key).copied()
    }
}

/// Deterministic gate: task table first, then provided-context markers,
/// otherwise retrieve.
#[derive(Debug, Clone, Default)]
pub struct RuleClassifier {
    pub table: TaskTable,
}

fn preamble_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\b(?:given|following|provided|below)\s+(?:text|passage|paragraph|sentence|document|article|context|excerpt|content|statement)s?\b",
        )
        .expect("valid regex")
    })
}

fn quoted_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?s)"([^"]*)"|\u{201C}([^\u{201D}]*)\u{201D}|``(.*?)''|```(.*?)```"#)
            .expect("valid regex")
    })
}

/// Longest quoted or fenced passage, in tokens.
pub(crate) fn longest_quoted_block(text: &str) -> usize {
    quoted_re()
        .captures_iter(text)
        .filter_map(|c| c.iter().skip(1).flatten().next().map(|m| token_count(m.as_str())))
        .max()
        .unwrap_or(0)
}

impl RuleClassifier {
    pub fn new(table: TaskTable) -> Self {
        Self { table }
    }

    pub fn decide(&self, query: &Query) -> ClassificationDecision {
        let rule = |label, confidence| ClassificationDecision {
            label,
            source: DecisionSource::Rule,
            confidence,
        };
        if let Some(label) = query.task_label.as_deref().and_then(|l| self.table.lookup(l)) {
            return rule(label, 1.0);
        }
        if preamble_re().is_match(&query.text)
            || longest_quoted_block(&query.text) >= QUOTED_BLOCK_MIN_TOKENS
        {
            return rule(Sufficiency::Sufficient, 0.8);
        }
        rule(Sufficiency::Insufficient, 0.5)
    }
}

impl QueryClassifier for RuleClassifier {
    fn classify(&self, query: &Query) -> std::result::Result<ClassificationDecision, ClientError> {
        Ok(self.decide(query))
    }
}

/// Asks a chat model for a one-word verdict.
pub struct LlmClassifier<C> {
    client: C,
    templates: TemplateSet,
}

impl<C: ChatClient> LlmClassifier<C> {
    pub fn new(client: C, templates: TemplateSet) -> Self {
        Self { client, templates }
    }

    pub fn parse(answer: &str) -> Option<Sufficiency> {
        let lower = answer.to_lowercase();
        let word = lower
            .split(|c: char| !c.is_alphabetic())
            .find(|w| !w.is_empty())?;
        match word {
            "insufficient" | "retrieve" | "no" => Some(Sufficiency::Insufficient),
            "sufficient" | "yes" => Some(Sufficiency::Sufficient),
            _ => None,
        }
    }
}

impl<C: ChatClient> QueryClassifier for LlmClassifier<C> {
    fn classify(&self, query: &Query) -> std::result::Result<ClassificationDecision, ClientError> {
        let prompt = self
            .templates
            .render("classify", &[("query", &query.text)])
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        let answer = self
            .client
            .complete(&ChatRequest::new(prompt, 4, 0.0).with_context(vec![query.text.clone()]))?;
        let label = Self::parse(&answer)
            .ok_or_else(|| ClientError::Decode(format!("unrecognised classifier verdict `{answer}`")))?;
        Ok(ClassificationDecision {
            label,
            source: DecisionSource::Remote,
            confidence: 1.0,
        })
    }
}
