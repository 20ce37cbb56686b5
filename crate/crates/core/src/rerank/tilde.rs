use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize_terms;
use crate::error::{Error, Result};
use crate::scored::{Provenance, ScoredEntry, ScoredList};
use crate::sparse::SparseIndex;
use crate::transform::Query;

pub const DEFAULT_VOCABULARY_TAG: &str = "word";

/// Per-chunk log-likelihoods of the tokens present in that chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct TildeIndex {
    likelihoods: BTreeMap<String, BTreeMap<String, f64>>,
    vocabulary_tag: String,
}

#[derive(Serialize, Deserialize)]
struct TildeLine {
    chunk: String,
    loglik: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab: Option<String>,
}

impl TildeIndex {
    pub fn new(
        likelihoods: BTreeMap<String, BTreeMap<String, f64>>,
        vocabulary_tag: impl Into<String>,
    ) -> Result<Self> {
        for (chunk, map) in &likelihoods {
            if let Some((t, v)) = map.iter().find(|(_, v)| **v > 0.0 || v.is_nan()) {
                return Err(Error::invalid(format!(
                    "log-probability for `{t}` in `{chunk}` must be <= 0, got {v}"
                )));
            }
        }
        Ok(Self {
            likelihoods,
            vocabulary_tag: vocabulary_tag.into(),
        })
    }

    pub fn vocabulary_tag(&self) -> &str {
        &self.vocabulary_tag
    }

    pub fn len(&self) -> usize {
        self.likelihoods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.likelihoods.is_empty()
    }

    pub fn get(&self, chunk: &str) -> Option<&BTreeMap<String, f64>> {
        self.likelihoods.get(chunk)
    }

    /// Sum of stored log-likelihoods of `tokens` (with multiplicity);
    /// tokens absent from the chunk add nothing.
    pub fn score(&self, chunk: &str, tokens: &[String]) -> Result<f64> {
        let map = self
            .likelihoods
            .get(chunk)
            .ok_or_else(|| Error::UnknownChunk(chunk.to_string()))?;
        Ok(tokens.iter().filter_map(|t| map.get(t)).sum())
    }

    /// JSONL, one `{"chunk", "loglik"}` object per line. A non-default
    /// vocabulary tag is written as `"vocab"` on every line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let vocab = (self.vocabulary_tag != DEFAULT_VOCABULARY_TAG).then(|| self.vocabulary_tag.clone());
        for (chunk, loglik) in &self.likelihoods {
            let line = TildeLine {
                chunk: chunk.clone(),
                loglik: loglik.clone(),
                vocab: vocab.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut likelihoods = BTreeMap::new();
        let mut tag: Option<String> = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message,
            };
            let rec: TildeLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let line_tag = rec.vocab.unwrap_or_else(|| DEFAULT_VOCABULARY_TAG.to_string());
            match &tag {
                Some(t) if *t != line_tag => {
                    return Err(parse_err(format!("vocabulary `{line_tag}` differs from `{t}`")))
                }
                _ => tag = Some(line_tag),
            }
            if likelihoods.insert(rec.chunk.clone(), rec.loglik).is_some() {
                return Err(Error::DuplicateId(rec.chunk));
            }
        }
        Self::new(likelihoods, tag.unwrap_or_else(|| DEFAULT_VOCABULARY_TAG.to_string()))
    }
}

/// Offline likelihoods from term statistics:
/// `ln(tf + 1) − ln(|d| + |vocab(d)|)` for each term present in `d`.
pub fn build_tilde_fallback(index: &SparseIndex) -> TildeIndex {
    let (postings, ids, lengths) = index.parts();
    let mut per_doc: Vec<BTreeMap<String, u32>> = vec![BTreeMap::new(); ids.len()];
    for (term, list) in postings {
        for p in list {
            per_doc[p.doc as usize].insert(term.clone(), p.tf);
        }
    }
    let likelihoods = ids
        .iter()
        .zip(lengths)
        .zip(per_doc)
        .map(|((id, &len), terms)| {
            let denom = (f64::from(len) + terms.len() as f64).ln();
            let map = terms
                .into_iter()
                .map(|(t, tf)| (t, (f64::from(tf) + 1.0).ln() - denom))
                .collect();
            (id.clone(), map)
        })
        .collect();
    TildeIndex {
        likelihoods,
        vocabulary_tag: DEFAULT_VOCABULARY_TAG.to_string(),
    }
}

pub fn rerank_tilde(index: &TildeIndex, query: &Query, candidates: &ScoredList, k: usize) -> Result<ScoredList> {
    if k == 0 {
        return Err(Error::invalid("rerank depth k must be at least 1"));
    }
    let tokens = tokenize_terms(&query.text);
    let entries = candidates
        .entries
        .iter()
        .map(|e| Ok(ScoredEntry::new(e.chunk.clone(), index.score(&e.chunk, &tokens)?, Provenance::Reranked)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoredList::ranked(candidates.query_id.clone(), "reranked", entries, k))
}
