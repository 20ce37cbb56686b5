use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scored::{Provenance, ScoredEntry, ScoredList};

/// Minimum grade counted as relevant by binary metrics.
pub const DEFAULT_THRESHOLD: u32 = 1;

/// A malformed input line that was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

/// Graded relevance judgments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    pub judgments: BTreeMap<String, BTreeMap<String, u32>>,
    pub threshold: u32,
}

impl Qrels {
    pub fn new(threshold: u32) -> Self {
        Self {
            judgments: BTreeMap::new(),
            threshold,
        }
    }

    pub fn insert(&mut self, query: impl Into<String>, doc: impl Into<String>, grade: u32) {
        self.judgments.entry(query.into()).or_default().insert(doc.into(), grade);
    }

    pub fn with_threshold(mut self, threshold: u32) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn grades(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query)
    }

    pub fn is_relevant(&self, query: &str, doc: &str) -> bool {
        self.grades(query)
            .and_then(|g| g.get(doc))
            .is_some_and(|&g| g >= self.threshold)
    }

    pub fn relevant_count(&self, query: &str) -> usize {
        self.grades(query)
            .map_or(0, |g| g.values().filter(|&&v| v >= self.threshold).count())
    }

    /// Parses TREC qrels lines `qid iter docid grade`, collecting malformed
    /// lines instead of failing on them.
    pub fn parse(text: &str, threshold: u32) -> (Self, Vec<LineIssue>) {
        let mut qrels = Self::new(threshold);
        let mut issues = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                [q, _, d, g] => g
                    .parse::<u32>()
                    .map(|g| (q, d, g))
                    .map_err(|_| format!("grade `{g}` is not a non-negative integer")),
                _ => Err(format!("expected 4 fields, found {}", fields.len())),
            };
            match parsed {
                Ok((q, d, g)) => qrels.insert(*q, *d, g),
                Err(message) => issues.push(LineIssue { line: n + 1, message }),
            }
        }
        (qrels, issues)
    }

    pub fn load(path: &Path, threshold: u32) -> Result<(Self, Vec<LineIssue>)> {
        Ok(Self::parse(&std::fs::read_to_string(path)?, threshold))
    }

    /// Fails on the first malformed line.
    pub fn load_strict(path: &Path, threshold: u32) -> Result<Self> {
        let (qrels, issues) = Self::load(path, threshold)?;
        match issues.into_iter().next() {
            Some(i) => Err(Error::Parse {
                path: path.to_path_buf(),
                line: i.line,
                message: i.message,
            }),
            None => Ok(qrels),
        }
    }
}

/// TREC run lines `qid Q0 docid rank score tag`, one block per list.
pub fn write_run(lists: &[ScoredList], tag: &str) -> String {
    let mut out = String::new();
    for list in lists {
        for (i, e) in list.entries.iter().enumerate() {
            let _ = writeln!(out, "{} Q0 {} {} {} {tag}", list.query_id, e.chunk, i + 1, e.score);
        }
    }
    out
}

pub fn write_run_file(path: &Path, lists: &[ScoredList], tag: &str) -> Result<()> {
    std::fs::write(path, write_run(lists, tag))?;
    Ok(())
}

/// Parses a TREC run into one list per query (ordered by query id), with
/// entries re-sorted by score. Malformed lines are collected.
pub fn read_run(text: &str, provenance: Provenance) -> (Vec<ScoredList>, Vec<LineIssue>) {
    let mut per_query: BTreeMap<String, Vec<ScoredEntry>> = BTreeMap::new();
    let mut issues = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = match fields.as_slice() {
            [q, _, d, _rank, s, _tag] => match s.parse::<f64>() {
                Ok(s) if s.is_finite() => Ok((q, d, s)),
                _ => Err(format!("score `{s}` is not a finite number")),
            },
            _ => Err(format!("expected 6 fields, found {}", fields.len())),
        };
        match parsed {
            Ok((q, d, s)) => per_query
                .entry(q.to_string())
                .or_default()
                .push(ScoredEntry::new(*d, s, provenance)),
            Err(message) => issues.push(LineIssue { line: n + 1, message }),
        }
    }
    let lists = per_query
        .into_iter()
        .map(|(q, entries)| ScoredList::ranked(q, "run", entries, usize::MAX))
        .collect();
    (lists, issues)
}

pub fn read_run_file(path: &Path) -> Result<(Vec<ScoredList>, Vec<LineIssue>)> {
    Ok(read_run(&std::fs::read_to_string(path)?, Provenance::Sparse))
}
