use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{LatencyStats, LineIssue};

/// Aggregated results of one evaluation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    /// Metric means keyed by name.
    pub metrics: BTreeMap<String, f64>,
    pub latency: LatencyStats,
    /// Query counts: evaluated, skipped for lack of judgments, fallbacks, ...
    pub counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub malformed: Vec<LineIssue>,
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub metrics: BTreeMap<String, f64>,
    /// Mean seconds per query.
    pub latency: f64,
}

impl ReportRow {
    /// Plain mean of the row's metrics, without task weighting.
    pub fn unweighted_mean(&self) -> f64 {
        if self.metrics.is_empty() {
            0.0
        } else {
            self.metrics.values().sum::<f64>() / self.metrics.len() as f64
        }
    }
}

impl EvalReport {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            name: self.name.clone(),
            metrics: self.metrics.clone(),
            latency: self.latency.total.mean,
        }
    }

    /// Summary row followed by the per-stage latency breakdown.
    pub fn to_markdown(&self) -> String {
        let mut out = render_markdown(&[self.row()]);
        out.push_str("\n| Stage | Mean (s) | p50 (s) | p95 (s) |\n|---|---|---|---|\n");
        for (stage, s) in self.latency.stages.iter().chain([("total".to_string(), self.latency.total)].iter().map(|(k, v)| (k, v))) {
            let _ = writeln!(out, "| {stage} | {:.4} | {:.4} | {:.4} |", s.mean, s.p50, s.p95);
        }
        if !self.counts.is_empty() {
            out.push('\n');
            for (k, v) in &self.counts {
                let _ = writeln!(out, "- {k}: {v}");
            }
        }
        out
    }
}

/// Markdown table: one row per configuration, one column per metric, then
/// the unweighted metric mean and the mean latency per query.
pub fn render_markdown(rows: &[ReportRow]) -> String {
    let columns: BTreeSet<&String> = rows.iter().flat_map(|r| r.metrics.keys()).collect();
    let mut out = String::from("| Method |");
    for c in &columns {
        let _ = write!(out, " {c} |");
    }
    out.push_str(" Avg. (unweighted) | Latency (s/query) |\n|---|");
    for _ in &columns {
        out.push_str("---|");
    }
    out.push_str("---|---|\n");
    for r in rows {
        let _ = write!(out, "| {} |", r.name);
        for c in &columns {
            match r.metrics.get(*c) {
                Some(v) => {
                    let _ = write!(out, " {v:.4} |");
                }
                None => out.push_str(" - |"),
            }
        }
        let _ = writeln!(out, " {:.4} | {:.4} |", r.unweighted_mean(), r.latency);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let rows = vec![
            ReportRow {
                name: "full".into(),
                metrics: BTreeMap::from([("em".to_string(), 0.5), ("f1".to_string(), 1.0)]),
                latency: 1.25,
            },
            ReportRow {
                name: "w/o reranking".into(),
                metrics: BTreeMap::from([("em".to_string(), 0.25)]),
                latency: 0.5,
            },
        ];
        let md = render_markdown(&rows);
        assert_eq!(
            md,
            "| Method | em | f1 | Avg. (unweighted) | Latency (s/query) |\n\
             |---|---|---|---|---|\n\
             | full | 0.5000 | 1.0000 | 0.7500 | 1.2500 |\n\
             | w/o reranking | 0.2500 | - | 0.2500 | 0.5000 |\n"
        );
    }
}
