//! Ranked candidate lists passed between pipeline stages.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Sparse,
    Dense,
    Fused,
    Reranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub chunk: String,
    pub score: f64,
    pub provenance: Provenance,
}

impl ScoredEntry {
    pub fn new(chunk: impl Into<String>, score: f64, provenance: Provenance) -> Self {
        Self {
            chunk: chunk.into(),
            score,
            provenance,
        }
    }
}

/// Ranking order: score descending, then chunk id ascending.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

/// One query's candidates at one stage.
///
/// Entries are kept in `(score desc, chunk id asc)` order without
/// duplicate chunks by every constructor in this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredList {
    pub query_id: String,
    pub entries: Vec<ScoredEntry>,
    pub stage: String,
    /// Seconds spent producing this list.
    pub latency: f64,
}

impl ScoredList {
    pub fn empty(query_id: impl Into<String>, stage: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            entries: Vec::new(),
            stage: stage.into(),
            latency: 0.0,
        }
    }

    /// Sorts `entries` into ranking order, keeps the best-ranked copy of
    /// each chunk and truncates to `k`.
    pub fn ranked(
        query_id: impl Into<String>,
        stage: impl Into<String>,
        mut entries: Vec<ScoredEntry>,
        k: usize,
    ) -> Self {
        entries.sort_by(|a, b| rank_order(a.score, &a.chunk, b.score, &b.chunk));
        let mut seen = HashSet::new();
        entries.retain(|e| seen.insert(e.chunk.clone()));
        entries.truncate(k);
        Self {
            query_id: query_id.into(),
            entries,
            stage: stage.into(),
            latency: 0.0,
        }
    }

    pub fn with_latency(mut self, seconds: f64) -> Self {
        self.latency = seconds;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.chunk.as_str()).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn score_of(&self, chunk: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.chunk == chunk).map(|e| e.score)
    }

    /// Checks the ordering and uniqueness invariant.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = HashSet::new();
        self.entries.iter().all(|e| seen.insert(e.chunk.as_str()))
            && self.entries.windows(2).all(|w| {
                rank_order(w[0].score, &w[0].chunk, w[1].score, &w[1].chunk) == Ordering::Less
            })
    }
}
