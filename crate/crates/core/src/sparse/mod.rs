//! Inverted index with Okapi BM25 scoring.
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! Query terms are summed with multiplicity. The `+1` inside the logarithm
//! keeps idf positive for terms present in more than half of the corpus.

mod persist;
mod varint;

pub use persist::{SparseManifest, MANIFEST_FILE, POSTINGS_FILE};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize_terms, Chunk};
use crate::error::{Error, Result};
use crate::scored::{Provenance, ScoredEntry, ScoredList};

pub const DEFAULT_K1: f64 = 0.9;
pub const DEFAULT_B: f64 = 0.4;
/// Candidates handed to the reranker.
pub const DEFAULT_FIRST_STAGE_K: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    /// Internal document number, index into `chunk_ids`.
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    chunk_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    params: Bm25Params,
    lookup: HashMap<String, u32>,
}

/// Builds an index over chunk texts.
pub fn build_sparse(chunks: &[Chunk], params: Bm25Params) -> Result<SparseIndex> {
    SparseIndex::from_texts(chunks.iter().map(|c| (c.id.as_str(), c.text.as_str())), params)
}

impl SparseIndex {
    /// Index arbitrary `(id, text)` pairs, e.g. sentences for extractive
    /// summarization.
    pub fn from_texts<'a>(
        items: impl IntoIterator<Item = (&'a str, &'a str)>,
        params: Bm25Params,
    ) -> Result<Self> {
        let tokenized = items
            .into_iter()
            .map(|(id, text)| (id.to_string(), tokenize_terms(text)));
        Self::from_tokens(tokenized, params)
    }

    pub fn from_tokens(
        items: impl IntoIterator<Item = (String, Vec<String>)>,
        params: Bm25Params,
    ) -> Result<Self> {
        if !(params.k1 >= 0.0 && (0.0..=1.0).contains(&params.b)) {
            return Err(Error::invalid(format!(
                "BM25 parameters out of range: k1={}, b={}",
                params.k1, params.b
            )));
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut chunk_ids = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut lookup = HashMap::new();
        for (id, terms) in items {
            let doc = u32::try_from(chunk_ids.len())
                .map_err(|_| Error::invalid("too many documents for one sparse index"))?;
            if lookup.insert(id.clone(), doc).is_some() {
                return Err(Error::DuplicateId(id));
            }
            let mut tfs: BTreeMap<String, u32> = BTreeMap::new();
            for t in &terms {
                *tfs.entry(t.clone()).or_default() += 1;
            }
            for (term, tf) in tfs {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
            chunk_ids.push(id);
            doc_lengths.push(terms.len() as u32);
        }
        if chunk_ids.is_empty() {
            return Err(Error::invalid("cannot build a sparse index over an empty corpus"));
        }
        let avg_doc_length = mean_length(&doc_lengths);
        Ok(Self {
            postings,
            chunk_ids,
            doc_lengths,
            avg_doc_length,
            params,
            lookup,
        })
    }

    pub(crate) fn from_parts(
        postings: BTreeMap<String, Vec<Posting>>,
        chunk_ids: Vec<String>,
        doc_lengths: Vec<u32>,
        avg_doc_length: f64,
        params: Bm25Params,
    ) -> Result<Self> {
        let mut lookup = HashMap::new();
        for (i, id) in chunk_ids.iter().enumerate() {
            if lookup.insert(id.clone(), i as u32).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            postings,
            chunk_ids,
            doc_lengths,
            avg_doc_length,
            params,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_ids.is_empty()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn chunk_ids(&self) -> &[String] {
        &self.chunk_ids
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_length(&self, chunk: &str) -> Option<u32> {
        self.lookup.get(chunk).map(|&d| self.doc_lengths[d as usize])
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub(crate) fn parts(&self) -> (&BTreeMap<String, Vec<Posting>>, &[String], &[u32]) {
        (&self.postings, &self.chunk_ids, &self.doc_lengths)
    }

    /// Term frequencies of every term in one document, sorted by term.
    pub fn document_terms(&self, chunk: &str) -> Result<Vec<(&str, u32)>> {
        let doc = *self
            .lookup
            .get(chunk)
            .ok_or_else(|| Error::UnknownChunk(chunk.to_string()))?;
        Ok(self
            .postings
            .iter()
            .filter_map(|(term, list)| {
                list.binary_search_by_key(&doc, |p| p.doc)
                    .ok()
                    .map(|i| (term.as_str(), list[i].tf))
            })
            .collect())
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let len = f64::from(self.doc_lengths[doc as usize]);
        let norm = if self.avg_doc_length > 0.0 {
            len / self.avg_doc_length
        } else {
            1.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm))
    }

    /// BM25 score of one indexed chunk for already-tokenized query terms.
    pub fn bm25_score(&self, query_tokens: &[String], chunk: &str) -> Result<f64> {
        let doc = *self
            .lookup
            .get(chunk)
            .ok_or_else(|| Error::UnknownChunk(chunk.to_string()))?;
        let mut score = 0.0;
        for term in query_tokens {
            let list = self.postings(term);
            if let Ok(i) = list.binary_search_by_key(&doc, |p| p.doc) {
                score += self.term_weight(self.idf(list.len()), list[i].tf, doc);
            }
        }
        Ok(score)
    }

    /// Every chunk sharing at least one term with the query, scored.
    pub fn score_all(&self, query_tokens: &[String]) -> HashMap<u32, f64> {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in query_tokens {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(list.len());
            for p in list {
                *acc.entry(p.doc).or_insert(0.0) += self.term_weight(idf, p.tf, p.doc);
            }
        }
        acc
    }

    /// Top-`k` chunks for a raw query string.
    pub fn search(&self, query_id: &str, query: &str, k: usize) -> Result<ScoredList> {
        self.search_tokens(query_id, &tokenize_terms(query), k)
    }

    pub fn search_tokens(&self, query_id: &str, tokens: &[String], k: usize) -> Result<ScoredList> {
        if k == 0 {
            return Err(Error::invalid("search depth k must be at least 1"));
        }
        let entries = self
            .score_all(tokens)
            .into_iter()
            .map(|(doc, s)| ScoredEntry::new(self.chunk_ids[doc as usize].clone(), s, Provenance::Sparse))
            .collect();
        Ok(ScoredList::ranked(query_id, "sparse", entries, k))
    }
}

pub fn search_sparse(index: &SparseIndex, query_id: &str, query: &str, k: usize) -> Result<ScoredList> {
    index.search(query_id, query, k)
}

fn mean_length(lengths: &[u32]) -> f64 {
    let total: u64 = lengths.iter().map(|&l| u64::from(l)).sum();
    total as f64 / lengths.len() as f64
}
