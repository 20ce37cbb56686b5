use log::warn;

use super::join_docs;
use crate::client::{ChatClient, ChatRequest};
use crate::corpus::{sentences, token_count, tokenize_terms};
use crate::dense::Embedder;
use crate::error::{Error, Result};
use crate::outcome::Outcome;
use crate::sparse::{Bm25Params, SparseIndex};
use crate::templates::TemplateSet;
use crate::transform::Query;

pub const DEFAULT_SUMMARY_RATIO: f64 = 0.4;

#[derive(Clone, Copy)]
pub enum SentenceScorer<'a> {
    /// BM25 over the pseudo-corpus of input sentences.
    Bm25,
    /// Cosine between sentence and query embeddings.
    Embedding(&'a dyn Embedder),
}

impl std::fmt::Debug for SentenceScorer<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Bm25 => f.write_str("Bm25"),
            Self::Embedding(e) => write!(f, "Embedding({})", e.tag()),
        }
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("summary ratio must lie in (0, 1], got {ratio}")))
    }
}

/// `ceil(ratio * input_tokens)`, at least 1.
pub fn summary_token_budget(input_tokens: usize, ratio: f64) -> usize {
    // The epsilon keeps e.g. 0.4 * 100 = 40.000000000000006 at 40.
    ((ratio * input_tokens as f64 - 1e-9).ceil().max(1.0)) as usize
}

fn score_sentences(query: &Query, sents: &[&str], scorer: SentenceScorer<'_>) -> Result<Vec<f64>> {
    match scorer {
        SentenceScorer::Bm25 => {
            let ids: Vec<String> = (0..sents.len()).map(|i| format!("s{i}")).collect();
            let index = SparseIndex::from_texts(ids.iter().map(String::as_str).zip(sents.iter().copied()), Bm25Params::default())?;
            let q = tokenize_terms(&query.text);
            ids.iter().map(|id| index.bm25_score(&q, id)).collect()
        }
        SentenceScorer::Embedding(backend) => {
            let mut texts: Vec<String> = sents.iter().map(|s| s.to_string()).collect();
            texts.push(query.text.clone());
            let vectors = backend.embed_batch(&texts)?;
            let (q, rest) = vectors.split_last().ok_or_else(|| Error::invalid("embedder returned no vectors"))?;
            rest.iter().map(|v| v.cosine(q)).collect()
        }
    }
}

/// Keeps the highest-scoring sentences while they fit within
/// `ratio ×` the input token count (always at least one), emitted in
/// their original order and joined by single spaces.
pub fn summarize_extractive(query: &Query, docs: &[String], ratio: f64, scorer: SentenceScorer<'_>) -> Result<String> {
    check_ratio(ratio)?;
    let sents: Vec<&str> = docs.iter().flat_map(|d| sentences(d)).collect();
    if sents.is_empty() {
        return Ok(String::new());
    }
    let lengths: Vec<usize> = sents.iter().map(|s| token_count(s)).collect();
    let total: usize = docs.iter().map(|d| token_count(d)).sum();
    let budget = ratio * total as f64 + 1e-9;
    let scores = score_sentences(query, &sents, scorer)?;

    let mut order: Vec<usize> = (0..sents.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = vec![false; sents.len()];
    let mut used = 0usize;
    for (n, &i) in order.iter().enumerate() {
        if n > 0 && (used + lengths[i]) as f64 > budget {
            break;
        }
        keep[i] = true;
        used += lengths[i];
    }
    Ok(sents
        .iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(*s))
        .collect::<Vec<_>>()
        .join(" "))
}

/// Summary written by `client` with generation length capped at
/// [`summary_token_budget`]. A failed or empty completion falls back to the
/// BM25 extractive summary.
pub fn summarize_abstractive(
    client: &dyn ChatClient,
    templates: &TemplateSet,
    query: &Query,
    docs: &[String],
    ratio: f64,
) -> Result<Outcome<String>> {
    check_ratio(ratio)?;
    if docs.is_empty() {
        return Ok(Outcome::ok(String::new()));
    }
    let input_tokens: usize = docs.iter().map(|d| token_count(d)).sum();
    let max_tokens = summary_token_budget(input_tokens, ratio);
    let prompt = templates.render(
        "summarize",
        &[("query", &query.text), ("context", &join_docs(docs.iter().map(String::as_str)))],
    )?;
    let request = ChatRequest::new(prompt, max_tokens, 0.0).with_context(docs.to_vec());
    let reason = match client.complete(&request) {
        Ok(text) if !text.trim().is_empty() => return Ok(Outcome::ok(text.trim().to_string())),
        Ok(_) => "abstractive summary was empty".to_string(),
        Err(e) => format!("abstractive summary failed: {e}"),
    };
    warn!("{reason}; using extractive summary");
    let text = summarize_extractive(query, docs, ratio, SentenceScorer::Bm25)?;
    Ok(Outcome::fallback(text, reason))
}
