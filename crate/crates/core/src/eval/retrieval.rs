use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Qrels;
use crate::error::{Error, Result};
use crate::scored::ScoredList;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricSpec {
    Map,
    Ndcg(usize),
    Recall(usize),
    Mrr(usize),
    HitRate(usize),
}

pub const DEFAULT_METRICS: &[MetricSpec] = &[
    MetricSpec::Map,
    MetricSpec::Ndcg(10),
    MetricSpec::Recall(10),
    MetricSpec::Recall(50),
    MetricSpec::Recall(1000),
    MetricSpec::Mrr(1),
    MetricSpec::Mrr(10),
    MetricSpec::Mrr(1000),
    MetricSpec::HitRate(10),
];

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Map => f.write_str("map"),
            Self::Ndcg(k) => write!(f, "ndcg@{k}"),
            Self::Recall(k) => write!(f, "recall@{k}"),
            Self::Mrr(k) => write!(f, "mrr@{k}"),
            Self::HitRate(k) => write!(f, "hit_rate@{k}"),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unknown metric `{s}`"));
        if s == "map" {
            return Ok(Self::Map);
        }
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        match name {
            "ndcg" => Ok(Self::Ndcg(k)),
            "recall" => Ok(Self::Recall(k)),
            "mrr" => Ok(Self::Mrr(k)),
            "hit_rate" => Ok(Self::HitRate(k)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for MetricSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Ranked doc ids with later duplicates removed.
fn dedup<'a>(ranking: &[&'a str]) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    ranking.iter().copied().filter(|d| seen.insert(*d)).collect()
}

fn relevant(grades: &BTreeMap<String, u32>, threshold: u32, doc: &str) -> bool {
    grades.get(doc).is_some_and(|&g| g >= threshold)
}

fn relevant_total(grades: &BTreeMap<String, u32>, threshold: u32) -> usize {
    grades.values().filter(|&&g| g >= threshold).count()
}

/// Mean of precision at each relevant rank, divided by all relevant docs
/// (unretrieved relevant docs contribute 0).
pub fn average_precision(ranking: &[&str], grades: &BTreeMap<String, u32>, threshold: u32) -> f64 {
    let total = relevant_total(grades, threshold);
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in dedup(ranking).iter().enumerate() {
        if relevant(grades, threshold, d) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total as f64
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

/// Graded nDCG with gain `2^grade − 1` and discount `log2(rank + 1)`;
/// 0 when the ideal DCG is 0.
pub fn ndcg_at(ranking: &[&str], grades: &BTreeMap<String, u32>, k: usize) -> f64 {
    let dcg: f64 = dedup(ranking)
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(grades.get(*d).copied().unwrap_or(0)) / ((i + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u32> = grades.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / ((i + 2) as f64).log2())
        .sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

pub fn recall_at(ranking: &[&str], grades: &BTreeMap<String, u32>, threshold: u32, k: usize) -> f64 {
    let total = relevant_total(grades, threshold);
    if total == 0 {
        return 0.0;
    }
    let found = dedup(ranking)
        .iter()
        .take(k)
        .filter(|d| relevant(grades, threshold, d))
        .count();
    found as f64 / total as f64
}

pub fn mrr_at(ranking: &[&str], grades: &BTreeMap<String, u32>, threshold: u32, k: usize) -> f64 {
    dedup(ranking)
        .iter()
        .take(k)
        .position(|d| relevant(grades, threshold, d))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

pub fn hit_at(ranking: &[&str], grades: &BTreeMap<String, u32>, threshold: u32, k: usize) -> f64 {
    if mrr_at(ranking, grades, threshold, k) > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    /// Mean over evaluated queries, keyed by metric name.
    pub metrics: BTreeMap<String, f64>,
    pub evaluated: usize,
    /// Run queries whose judgments contain no relevant document.
    pub no_relevant: usize,
    /// Run queries absent from the qrels.
    pub no_judgments: usize,
}

/// Averages each metric over run queries that have at least one relevant
/// judged document; the others are counted and left out of every mean.
pub fn retrieval_metrics(runs: &[ScoredList], qrels: &Qrels, metrics: &[MetricSpec]) -> RetrievalReport {
    let mut sums: BTreeMap<MetricSpec, f64> = metrics.iter().map(|m| (*m, 0.0)).collect();
    let (mut evaluated, mut no_relevant, mut no_judgments) = (0, 0, 0);
    for run in runs {
        let Some(grades) = qrels.grades(&run.query_id) else {
            no_judgments += 1;
            continue;
        };
        if relevant_total(grades, qrels.threshold) == 0 {
            no_relevant += 1;
            continue;
        }
        evaluated += 1;
        let ranking = run.ids();
        let t = qrels.threshold;
        for (m, sum) in sums.iter_mut() {
            *sum += match *m {
                MetricSpec::Map => average_precision(&ranking, grades, t),
                MetricSpec::Ndcg(k) => ndcg_at(&ranking, grades, k),
                MetricSpec::Recall(k) => recall_at(&ranking, grades, t, k),
                MetricSpec::Mrr(k) => mrr_at(&ranking, grades, t, k),
                MetricSpec::HitRate(k) => hit_at(&ranking, grades, t, k),
            };
        }
    }
    let metrics = sums
        .into_iter()
        .map(|(m, s)| (m.to_string(), if evaluated == 0 { 0.0 } else { s / evaluated as f64 }))
        .collect();
    RetrievalReport {
        metrics,
        evaluated,
        no_relevant,
        no_judgments,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grades(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn ap_two_relevant_at_one_and_three() {
        let g = grades(&[("a", 1), ("c", 1)]);
        assert_abs_diff_eq!(average_precision(&["a", "b", "c"], &g, 1), 5.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn perfect_ranking() {
        let g = grades(&[("a", 3), ("b", 2), ("c", 1), ("x", 0)]);
        let r = ["a", "b", "c", "x"];
        assert_abs_diff_eq!(ndcg_at(&r, &g, 10), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(average_precision(&r, &g, 1), 1.0, epsilon = 1e-12);
        assert_eq!(recall_at(&r, &g, 1, 3), 1.0);
    }

    #[test]
    fn mrr_first_relevant_at_three() {
        let g = grades(&[("c", 1)]);
        assert_abs_diff_eq!(mrr_at(&["a", "b", "c"], &g, 1, 10), 1.0 / 3.0);
        assert_eq!(mrr_at(&["a", "b", "c"], &g, 1, 2), 0.0);
        assert_eq!(hit_at(&["a", "b", "c"], &g, 1, 2), 0.0);
        assert_eq!(hit_at(&["a", "b", "c"], &g, 1, 3), 1.0);
    }

    #[test]
    fn spec_names_round_trip() {
        for m in DEFAULT_METRICS {
            assert_eq!(m.to_string().parse::<MetricSpec>().unwrap(), *m);
        }
        assert!("ndcg@0".parse::<MetricSpec>().is_err());
        assert!("p@5".parse::<MetricSpec>().is_err());
    }

    #[test]
    fn excluded_queries_are_counted() {
        use crate::scored::{Provenance, ScoredEntry};
        let mut qrels = Qrels::new(1);
        qrels.insert("q1", "a", 1);
        qrels.insert("q2", "a", 0);
        let list = |q: &str| ScoredList::ranked(q, "s", vec![ScoredEntry::new("a", 1.0, Provenance::Sparse)], 10);
        let report = retrieval_metrics(&[list("q1"), list("q2"), list("q3")], &qrels, &[MetricSpec::Map]);
        assert_eq!((report.evaluated, report.no_relevant, report.no_judgments), (1, 1, 1));
        assert_eq!(report.metrics["map"], 1.0);
    }

    #[test]
    fn relevant_ranks_alone_determine_ap() {
        let g = grades(&[("r1", 1), ("r2", 1)]);
        let a = average_precision(&["r1", "x", "y", "r2", "z"], &g, 1);
        let b = average_precision(&["r1", "z", "x", "r2", "y"], &g, 1);
        assert_eq!(a, b);
    }
}
