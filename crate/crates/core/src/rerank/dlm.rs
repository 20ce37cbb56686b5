use std::collections::HashSet;

use log::warn;
use serde_json::{json, Value};

use crate::client::{ClientError, Endpoint, HttpJson, RetryPolicy};
use crate::corpus::{tokenize_terms, ChunkStore};
use crate::error::{Error, Result};
use crate::outcome::Outcome;
use crate::scored::{Provenance, ScoredEntry, ScoredList};
use crate::transform::Query;

/// (query, passage) pairs per scoring request.
pub const DLM_BATCH: usize = 16;

/// Scores passages for one query; each score is a relevance probability.
pub trait RelevanceScorer: Send + Sync {
    fn score(&self, query: &str, passages: &[String]) -> std::result::Result<Vec<f64>, ClientError>;

    fn tag(&self) -> String;
}

/// Client for a scoring service speaking
/// `{"query", "passages": [...]}` → `{"scores": [...]}`.
#[derive(Debug, Clone)]
pub struct RemoteReranker {
    http: HttpJson,
    path: String,
    model: String,
}

impl RemoteReranker {
    pub fn new(endpoint: &Endpoint, policy: RetryPolicy) -> std::result::Result<Self, ClientError> {
        Ok(Self {
            http: HttpJson::new(endpoint, policy)?,
            path: "rerank".to_string(),
            model: endpoint.model.clone(),
        })
    }
}

impl RelevanceScorer for RemoteReranker {
    fn score(&self, query: &str, passages: &[String]) -> std::result::Result<Vec<f64>, ClientError> {
        let resp = self
            .http
            .post_json(&self.path, &json!({"query": query, "passages": passages}))?;
        let scores: Vec<f64> = resp
            .get("scores")
            .and_then(Value::as_array)
            .ok_or_else(|| ClientError::Decode("rerank response has no `scores` array".into()))?
            .iter()
            .map(Value::as_f64)
            .collect::<Option<_>>()
            .ok_or_else(|| ClientError::Decode("non-numeric rerank score".into()))?;
        if scores.len() != passages.len() {
            return Err(ClientError::Decode(format!(
                "expected {} scores, got {}",
                passages.len(),
                scores.len()
            )));
        }
        Ok(scores)
    }

    fn tag(&self) -> String {
        format!("remote:{}", self.model)
    }
}

/// Offline stand-in: fraction of distinct query terms found in the passage.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapScorer;

impl RelevanceScorer for OverlapScorer {
    fn score(&self, query: &str, passages: &[String]) -> std::result::Result<Vec<f64>, ClientError> {
        let q: HashSet<String> = tokenize_terms(query).into_iter().collect();
        Ok(passages
            .iter()
            .map(|p| {
                if q.is_empty() {
                    return 0.0;
                }
                let terms: HashSet<String> = tokenize_terms(p).into_iter().collect();
                q.intersection(&terms).count() as f64 / q.len() as f64
            })
            .collect())
    }

    fn tag(&self) -> String {
        "overlap".to_string()
    }
}

/// Rescores every candidate with `scorer` in batches of [`DLM_BATCH`],
/// running up to `parallelism` batches at once.
///
/// Pairs whose batch fails keep their first-stage score; their chunk ids
/// are reported through the outcome's fallback note.
pub fn rerank_dlm(
    scorer: &dyn RelevanceScorer,
    query: &Query,
    candidates: &ScoredList,
    store: &ChunkStore,
    k: usize,
    parallelism: usize,
) -> Result<Outcome<ScoredList>> {
    if k == 0 {
        return Err(Error::invalid("rerank depth k must be at least 1"));
    }
    let passages: Vec<String> = candidates
        .entries
        .iter()
        .map(|e| store.text(&e.chunk).map(str::to_string))
        .collect::<Result<_>>()?;
    let batches: Vec<(usize, &[String])> = passages
        .chunks(DLM_BATCH)
        .enumerate()
        .map(|(i, c)| (i * DLM_BATCH, c))
        .collect();
    let mut scores: Vec<Option<f64>> = vec![None; passages.len()];
    for wave in batches.chunks(parallelism.max(1)) {
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&(offset, batch)| (offset, batch.len(), s.spawn(move || scorer.score(&query.text, batch))))
                .collect();
            handles
                .into_iter()
                .map(|(o, n, h)| (o, n, h.join().unwrap_or_else(|_| Err(ClientError::Unavailable("scorer panicked".into())))))
                .collect()
        });
        for (offset, n, result) in results {
            match result {
                Ok(batch_scores) if batch_scores.len() == n => {
                    for (i, s) in batch_scores.into_iter().enumerate() {
                        if s.is_finite() {
                            scores[offset + i] = Some(s.clamp(0.0, 1.0));
                        }
                    }
                }
                Ok(batch_scores) => warn!(
                    "reranker returned {} scores for {n} passages; keeping first-stage scores",
                    batch_scores.len()
                ),
                Err(e) => warn!("rerank batch at {offset} failed: {e}; keeping first-stage scores"),
            }
        }
    }
    let mut failed = Vec::new();
    let entries = candidates
        .entries
        .iter()
        .zip(scores)
        .map(|(e, s)| match s {
            Some(s) => ScoredEntry::new(e.chunk.clone(), s, Provenance::Reranked),
            None => {
                failed.push(e.chunk.clone());
                ScoredEntry::new(e.chunk.clone(), e.score, e.provenance)
            }
        })
        .collect();
    let list = ScoredList::ranked(candidates.query_id.clone(), "reranked", entries, k);
    Ok(if failed.is_empty() {
        Outcome::ok(list)
    } else {
        Outcome::fallback(list, format!("rerank kept first-stage scores for {}", failed.join(",")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Chunk;

    fn store(n: usize) -> ChunkStore {
        ChunkStore::new((0..n).map(|i| Chunk {
            id: format!("c{i:02}"),
            doc_id: format!("d{i}"),
            text: format!("passage {i}"),
            token_start: 0,
            token_end: 2,
            sentence_start: 0,
            sentence_end: 1,
            parent_id: None,
            position: 0,
            title: None,
        }))
        .unwrap()
    }

    fn candidates(n: usize) -> ScoredList {
        ScoredList::ranked(
            "q",
            "fused",
            (0..n)
                .map(|i| ScoredEntry::new(format!("c{i:02}"), 1.0 - i as f64 / 100.0, Provenance::Fused))
                .collect(),
            usize::MAX,
        )
    }

    struct ByPassage<F>(F);

    impl<F: Fn(&str) -> std::result::Result<f64, ClientError> + Send + Sync> RelevanceScorer for ByPassage<F> {
        fn score(&self, _q: &str, passages: &[String]) -> std::result::Result<Vec<f64>, ClientError> {
            passages.iter().map(|p| (self.0)(p)).collect()
        }
        fn tag(&self) -> String {
            "test".into()
        }
    }

    fn passage_index(p: &str) -> usize {
        p.trim_start_matches("passage ").parse().unwrap()
    }

    #[test]
    fn reversed_scores_reverse_the_list() {
        let cands = candidates(40);
        let scorer = ByPassage(|p: &str| Ok(passage_index(p) as f64 / 100.0));
        let out = rerank_dlm(&scorer, &Query::new("q", "x"), &cands, &store(40), 40, 3).unwrap();
        let mut expected = cands.ids();
        expected.reverse();
        assert_eq!(out.value.ids(), expected);
        assert!(!out.is_fallback());
        assert!(out.value.entries.iter().all(|e| e.provenance == Provenance::Reranked));
    }

    #[test]
    fn constant_scores_restore_id_order() {
        let mut cands = candidates(5);
        cands.entries.reverse();
        let scorer = ByPassage(|_: &str| Ok(0.5));
        let out = rerank_dlm(&scorer, &Query::new("q", "x"), &cands, &store(5), 5, 1).unwrap();
        assert_eq!(out.value.ids(), vec!["c00", "c01", "c02", "c03", "c04"]);
    }

    #[test]
    fn truncates_to_k() {
        let out = rerank_dlm(&OverlapScorer, &Query::new("q", "passage"), &candidates(50), &store(50), 10, 4).unwrap();
        assert_eq!(out.value.len(), 10);
    }

    #[test]
    fn failed_batch_keeps_first_stage_scores() {
        // Batch #1 (passages 16..32) fails.
        let scorer = ByPassage(|p: &str| {
            let i = passage_index(p);
            if (16..32).contains(&i) {
                Err(ClientError::Unavailable("boom".into()))
            } else {
                Ok(0.0)
            }
        });
        let cands = candidates(40);
        let out = rerank_dlm(&scorer, &Query::new("q", "x"), &cands, &store(40), 40, 2).unwrap();
        assert!(out.is_fallback());
        assert!(out.fallback.as_ref().unwrap().contains("c16"));
        assert_eq!(out.value.entries[0].chunk, "c16");
        assert_eq!(out.value.score_of("c16"), cands.score_of("c16"));
        let mut got: Vec<&str> = out.value.ids();
        got.sort();
        assert_eq!(got, cands.ids());
    }

    #[test]
    fn unknown_candidate_errors() {
        let out = rerank_dlm(&OverlapScorer, &Query::new("q", "x"), &candidates(3), &store(2), 3, 1);
        assert!(matches!(out, Err(Error::UnknownChunk(_))));
    }

    #[test]
    fn overlap_scorer_range() {
        let s = OverlapScorer.score("red fox jumps", &["the red fox".into(), "nothing".into()]).unwrap();
        assert_eq!(s, vec![2.0 / 3.0, 0.0]);
    }
}
