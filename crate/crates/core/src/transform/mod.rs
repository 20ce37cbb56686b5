//! Pre-retrieval query handling: the retrieval gate, rewriting,
//! decomposition and hypothetical-document generation.

mod classify;
mod hyde;
mod rewrite;

use serde::{Deserialize, Serialize};

use crate::dense::EmbeddingVector;

pub use classify::{
    classify_query, ClassificationDecision, DecisionSource, LlmClassifier, QueryClassifier,
    RuleClassifier, Sufficiency, TaskTable,
};
pub use hyde::{hyde_combine, hyde_generate, HYDE_MAX_TOKENS, HYDE_TEMPERATURE};
pub use rewrite::{decompose_query, parse_subqueries, rewrite_query, MAX_SUBQUERIES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_label: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_doc_ids: Vec<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            task_label: None,
            gold_answers: Vec::new(),
            gold_doc_ids: Vec::new(),
        }
    }

    pub fn with_task(mut self, label: impl Into<String>) -> Self {
        self.task_label = Some(label.into());
        self
    }

    pub fn with_answers(mut self, answers: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.gold_answers = answers.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_gold_docs(mut self, docs: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.gold_doc_ids = docs.into_iter().map(Into::into).collect();
        self
    }
}

/// Everything the transform stage derived from one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedQuery {
    pub original: Query,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewritten: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subqueries: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pseudo_docs: Vec<String>,
    #[serde(skip)]
    pub dense_query_vector: Option<EmbeddingVector>,
}

impl TransformedQuery {
    pub fn new(original: Query) -> Self {
        Self {
            original,
            rewritten: None,
            subqueries: Vec::new(),
            pseudo_docs: Vec::new(),
            dense_query_vector: None,
        }
    }

    /// Text used for lexical retrieval: the rewrite when present.
    pub fn search_text(&self) -> &str {
        self.rewritten.as_deref().unwrap_or(&self.original.text)
    }
}
