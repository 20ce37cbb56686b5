//! Second-stage rerankers: a remote relevance-classifier service and
//! precomputed per-document query-likelihood sums.

mod dlm;
mod tilde;

pub use dlm::{rerank_dlm, OverlapScorer, RelevanceScorer, RemoteReranker, DLM_BATCH};
pub use tilde::{build_tilde_fallback, rerank_tilde, TildeIndex, DEFAULT_VOCABULARY_TAG};
