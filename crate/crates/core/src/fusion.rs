//! Score normalization, hybrid fusion `S_h = α·S_s + S_d` and sub-query
//! list merging.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::scored::{Provenance, ScoredEntry, ScoredList};

pub const DEFAULT_ALPHA: f64 = 0.3;
pub const ALPHA_SWEEP: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Min–max scales scores into `[0, 1]` within this list. A list whose
/// scores are all equal maps every entry to `1.0`. Entry order is kept.
pub fn normalize_scores(list: &ScoredList) -> ScoredList {
    let mut out = list.clone();
    let (min, max) = list
        .entries
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.score), hi.max(e.score)));
    let range = max - min;
    for e in &mut out.entries {
        e.score = if range > 0.0 { (e.score - min) / range } else { 1.0 };
    }
    out
}

/// Fuses two normalized lists. A chunk missing from one side scores 0 on
/// that side.
pub fn hybrid_fuse(sparse: &ScoredList, dense: &ScoredList, alpha: f64, k: usize) -> Result<ScoredList> {
    if sparse.query_id != dense.query_id {
        return Err(Error::QueryMismatch {
            left: sparse.query_id.clone(),
            right: dense.query_id.clone(),
        });
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be non-negative, got {alpha}")));
    }
    let mut sides: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for e in &sparse.entries {
        sides.entry(&e.chunk).or_default().0 = e.score;
    }
    for e in &dense.entries {
        sides.entry(&e.chunk).or_default().1 = e.score;
    }
    let entries = sides
        .into_iter()
        .map(|(id, (s, d))| ScoredEntry::new(id, alpha * s + d, Provenance::Fused))
        .collect();
    Ok(ScoredList::ranked(sparse.query_id.clone(), "fused", entries, k))
}

/// Normalizes both lists, then fuses them.
pub fn normalize_and_fuse(sparse: &ScoredList, dense: &ScoredList, alpha: f64, k: usize) -> Result<ScoredList> {
    hybrid_fuse(&normalize_scores(sparse), &normalize_scores(dense), alpha, k)
}

/// Round-robin interleave by rank, keeping each chunk's first (best)
/// appearance. Scores become `1 / merged rank`.
pub fn merge_subquery_lists(lists: &[ScoredList], k: usize) -> Result<ScoredList> {
    let Some(first) = lists.first() else {
        return Ok(ScoredList::empty("", "merged"));
    };
    if let Some(other) = lists.iter().find(|l| l.query_id != first.query_id) {
        return Err(Error::QueryMismatch {
            left: first.query_id.clone(),
            right: other.query_id.clone(),
        });
    }
    let depth = lists.iter().map(ScoredList::len).max().unwrap_or(0);
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    'outer: for rank in 0..depth {
        for list in lists {
            if let Some(e) = list.entries.get(rank) {
                if seen.insert(e.chunk.clone()) {
                    let merged_rank = entries.len() + 1;
                    entries.push(ScoredEntry::new(e.chunk.clone(), 1.0 / merged_rank as f64, e.provenance));
                    if entries.len() == k {
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(ScoredList {
        query_id: first.query_id.clone(),
        entries,
        stage: "merged".to_string(),
        latency: lists.iter().map(|l| l.latency).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn list(qid: &str, items: &[(&str, f64)], prov: Provenance) -> ScoredList {
        ScoredList::ranked(
            qid,
            "t",
            items.iter().map(|(c, s)| ScoredEntry::new(*c, *s, prov)).collect(),
            usize::MAX,
        )
    }

    #[test]
    fn min_max_cases() {
        let l = list("q", &[("a", 6.0), ("b", 4.0), ("c", 2.0)], Provenance::Sparse);
        assert_eq!(normalize_scores(&l).scores(), vec![1.0, 0.5, 0.0]);
        let eq = list("q", &[("a", 5.0), ("b", 5.0)], Provenance::Sparse);
        assert_eq!(normalize_scores(&eq).scores(), vec![1.0, 1.0]);
        let one = list("q", &[("a", 3.7)], Provenance::Sparse);
        assert_eq!(normalize_scores(&one).scores(), vec![1.0]);
        assert!(normalize_scores(&ScoredList::empty("q", "t")).is_empty());
    }

    #[test]
    fn fusion_arithmetic() {
        let s = list("q", &[("a", 1.0)], Provenance::Sparse);
        let d = list("q", &[("a", 0.5)], Provenance::Dense);
        let f = hybrid_fuse(&s, &d, 0.3, 10).unwrap();
        assert_eq!(f.entries[0].score, 0.8);
        assert_eq!(f.entries[0].provenance, Provenance::Fused);
        assert_eq!(DEFAULT_ALPHA, 0.3);
    }

    #[test]
    fn missing_side_is_zero_and_mismatch_errors() {
        let s = list("q", &[("a", 1.0), ("b", 0.2)], Provenance::Sparse);
        let d = list("q", &[("c", 0.9)], Provenance::Dense);
        let f = hybrid_fuse(&s, &d, 0.5, 10).unwrap();
        assert_eq!(f.ids(), vec!["c", "a", "b"]);
        assert_eq!(f.scores(), vec![0.9, 0.5, 0.1]);
        let other = list("other", &[("c", 0.9)], Provenance::Dense);
        assert!(matches!(hybrid_fuse(&s, &other, 0.3, 5), Err(Error::QueryMismatch { .. })));
        assert!(hybrid_fuse(&s, &d, -1.0, 5).is_err());
    }

    #[test]
    fn merge_round_robin() {
        let a = list("q", &[("A", 2.0), ("B", 1.0)], Provenance::Sparse);
        let b = list("q", &[("B", 2.0), ("C", 1.0)], Provenance::Sparse);
        let m = merge_subquery_lists(&[a.clone(), b], 3).unwrap();
        assert_eq!(m.ids(), vec!["A", "B", "C"]);
        assert_eq!(m.scores(), vec![1.0, 0.5, 1.0 / 3.0]);
        assert_eq!(merge_subquery_lists(std::slice::from_ref(&a), 10).unwrap().ids(), a.ids());
        assert_eq!(merge_subquery_lists(&[a.clone(), a.clone()], 1).unwrap().ids(), vec!["A"]);
        assert!(merge_subquery_lists(&[], 3).unwrap().is_empty());
        let c = list("z", &[("A", 1.0)], Provenance::Sparse);
        assert!(merge_subquery_lists(&[a, c], 3).is_err());
    }

    fn arb_list(prov: Provenance) -> impl Strategy<Value = ScoredList> {
        proptest::collection::btree_map(0u8..40, -5.0f64..20.0, 1..25).prop_map(move |m| {
            ScoredList::ranked(
                "q",
                "t",
                m.into_iter().map(|(id, s)| ScoredEntry::new(format!("c{id:02}"), s, prov)).collect(),
                usize::MAX,
            )
        })
    }

    proptest! {
        #[test]
        fn positive_affine_rescaling_keeps_fused_ranking(
            s in arb_list(Provenance::Sparse),
            d in arb_list(Provenance::Dense),
            scale_s in 0.01f64..100.0, shift_s in -50.0f64..50.0,
            scale_d in 0.01f64..100.0, shift_d in -50.0f64..50.0,
            alpha in 0.0f64..2.0,
        ) {
            let base = normalize_and_fuse(&s, &d, alpha, 100).unwrap();
            let mut s2 = s.clone();
            s2.entries.iter_mut().for_each(|e| e.score = e.score * scale_s + shift_s);
            let mut d2 = d.clone();
            d2.entries.iter_mut().for_each(|e| e.score = e.score * scale_d + shift_d);
            let moved = normalize_and_fuse(&s2, &d2, alpha, 100).unwrap();
            for (a, b) in base.entries.iter().zip(&moved.entries) {
                prop_assert!((a.score - b.score).abs() < 1e-9);
            }
            // Rankings agree wherever the fused scores are separated.
            for (i, e) in base.entries.iter().enumerate() {
                let j = moved.entries.iter().position(|x| x.chunk == e.chunk).unwrap();
                if i != j {
                    prop_assert!((e.score - moved.entries[j].score).abs() < 1e-9 || (base.entries[j].score - e.score).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn raising_alpha_only_lets_stronger_sparse_docs_pass_a_leader(
            s in arb_list(Provenance::Sparse),
            d in arb_list(Provenance::Dense),
            a1 in 0.0f64..1.0, delta in 0.0f64..1.0,
        ) {
            // A doc whose sparse score beats everything ranked above it can
            // only be overtaken by docs from below with a larger sparse score.
            let (s, d) = (normalize_scores(&s), normalize_scores(&d));
            let low = hybrid_fuse(&s, &d, a1, 200).unwrap();
            let high = hybrid_fuse(&s, &d, a1 + delta, 200).unwrap();
            let sparse_of = |id: &str| s.score_of(id).unwrap_or(0.0);
            for (rank, e) in low.entries.iter().enumerate() {
                let es = sparse_of(&e.chunk);
                if !low.entries[..rank].iter().all(|x| es > sparse_of(&x.chunk)) {
                    continue;
                }
                let stronger_below = low.entries[rank + 1..]
                    .iter()
                    .filter(|x| sparse_of(&x.chunk) > es)
                    .count();
                let new_rank = high.entries.iter().position(|x| x.chunk == e.chunk).unwrap();
                prop_assert!(new_rank <= rank + stronger_below, "{} moved {} -> {}", e.chunk, rank, new_rank);
                // Brute-force re-fusion agrees with the fused scores.
                let brute = (a1 + delta) * es + d.score_of(&e.chunk).unwrap_or(0.0);
                prop_assert_eq!(high.entries[new_rank].score, brute);
            }
        }
    }
}
