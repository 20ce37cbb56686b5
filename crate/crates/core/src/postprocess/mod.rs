//! Post-retrieval context handling: repacking, summarization, prompt
//! assembly and fine-tuning context compositions.

mod finetune;
mod summarize;

use serde::{Deserialize, Serialize};

use crate::corpus::ChunkStore;
use crate::error::Result;
use crate::scored::ScoredList;
use crate::templates::TemplateSet;
use crate::transform::Query;

pub use finetune::{compose_finetune_context, write_finetune_jsonl, FinetuneEntry, FinetuneMode};
pub use summarize::{
    summarize_abstractive, summarize_extractive, summary_token_budget, SentenceScorer, DEFAULT_SUMMARY_RATIO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepackMode {
    Forward,
    #[default]
    Reverse,
    Sides,
}

impl std::str::FromStr for RepackMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Self::Forward),
            "reverse" => Ok(Self::Reverse),
            "sides" => Ok(Self::Sides),
            other => Err(crate::Error::invalid(format!("unknown repack mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDoc {
    pub chunk: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepackedContext {
    pub docs: Vec<ContextDoc>,
    pub mode: RepackMode,
}

impl RepackedContext {
    pub fn texts(&self) -> Vec<String> {
        self.docs.iter().map(|d| d.text.clone()).collect()
    }

    pub fn joined(&self) -> String {
        join_docs(self.docs.iter().map(|d| d.text.as_str()))
    }
}

pub(crate) fn join_docs<'a>(docs: impl IntoIterator<Item = &'a str>) -> String {
    docs.into_iter().collect::<Vec<_>>().join("\n\n")
}

/// Reorders items given best-first.
///
/// `Sides` places rank 1 first, rank 2 last, rank 3 second, rank 4
/// second-to-last and so on inward.
pub fn repack_order<T>(ranked: Vec<T>, mode: RepackMode) -> Vec<T> {
    match mode {
        RepackMode::Forward => ranked,
        RepackMode::Reverse => {
            let mut v = ranked;
            v.reverse();
            v
        }
        RepackMode::Sides => {
            let mut head = Vec::with_capacity(ranked.len());
            let mut tail = Vec::new();
            for (i, item) in ranked.into_iter().enumerate() {
                if i % 2 == 0 {
                    head.push(item);
                } else {
                    tail.push(item);
                }
            }
            tail.reverse();
            head.extend(tail);
            head
        }
    }
}

/// Repacks `list` using chunk texts from `store`.
pub fn repack(list: &ScoredList, store: &ChunkStore, mode: RepackMode) -> Result<RepackedContext> {
    let docs = list
        .entries
        .iter()
        .map(|e| {
            Ok(ContextDoc {
                chunk: e.chunk.clone(),
                text: store.text(&e.chunk)?.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RepackedContext {
        docs: repack_order(docs, mode),
        mode,
    })
}

/// Renders `template_name` with the query text and the context documents
/// joined by blank lines in their repacked order.
pub fn assemble_prompt(
    templates: &TemplateSet,
    query: &Query,
    context: &RepackedContext,
    template_name: &str,
) -> Result<String> {
    templates.render(template_name, &[("query", &query.text), ("context", &context.joined())])
}
