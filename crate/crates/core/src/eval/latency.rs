use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Seconds per query, per stage and in total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub queries: usize,
    pub stages: BTreeMap<String, StageStats>,
    pub total: StageStats,
}

/// Nearest-rank percentile (`p` in `(0, 1]`) of unsorted values; 0 for none.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn stats(values: &[f64]) -> StageStats {
    if values.is_empty() {
        return StageStats::default();
    }
    StageStats {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        p50: percentile(values, 0.5),
        p95: percentile(values, 0.95),
    }
}

/// Aggregates per-query stage latencies. A stage missing from a query's
/// map counts as 0 seconds for that query; the total is the sum of a
/// query's stages.
pub fn latency_stats(traces: &[BTreeMap<String, f64>]) -> LatencyStats {
    let names: BTreeSet<&String> = traces.iter().flat_map(|t| t.keys()).collect();
    let stages = names
        .into_iter()
        .map(|name| {
            let values: Vec<f64> = traces.iter().map(|t| t.get(name).copied().unwrap_or(0.0)).collect();
            (name.clone(), stats(&values))
        })
        .collect();
    let totals: Vec<f64> = traces.iter().map(|t| t.values().sum()).collect();
    LatencyStats {
        queries: traces.len(),
        stages,
        total: stats(&totals),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn single_trace() {
        let s = latency_stats(&[trace(&[("retrieve", 0.5), ("generate", 1.5)])]);
        assert_eq!(s.stages["retrieve"], StageStats { mean: 0.5, p50: 0.5, p95: 0.5 });
        assert_eq!(s.total.mean, 2.0);
    }

    #[test]
    fn absent_stage_counts_zero() {
        let s = latency_stats(&[trace(&[("rerank", 2.0), ("generate", 1.0)]), trace(&[("generate", 3.0)])]);
        assert_eq!(s.stages["rerank"].mean, 1.0);
        assert_eq!(s.total.mean, 3.0);
        let two = latency_stats(&[trace(&[("g", 1.0)]), trace(&[("g", 3.0)])]);
        assert_eq!(two.total.mean, 2.0);
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 10.0);
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(percentile(&[4.0], 0.95), 4.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }
}
