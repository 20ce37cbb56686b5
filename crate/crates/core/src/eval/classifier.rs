use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::Sufficiency;

/// Binary metrics with "insufficient" (needs retrieval) as the positive
/// class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassifierMetrics {
    /// True when every field is within `tolerance` of `other`.
    pub fn close_to(&self, other: &Self, tolerance: f64) -> bool {
        [
            (self.accuracy, other.accuracy),
            (self.precision, other.precision),
            (self.recall, other.recall),
            (self.f1, other.f1),
        ]
        .iter()
        .all(|(a, b)| (a - b).abs() <= tolerance)
    }
}

pub fn classifier_metrics(predictions: &[Sufficiency], labels: &[Sufficiency]) -> Result<ClassifierMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("no classifier predictions to score"));
    }
    let pos = Sufficiency::Insufficient;
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (p, l) in predictions.iter().zip(labels) {
        match (*p == pos, *l == pos) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassifierMetrics {
        accuracy: ratio(tp + tn, labels.len()),
        precision,
        recall,
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Sufficiency::{Insufficient as I, Sufficient as S};

    #[test]
    fn perfect_and_all_positive() {
        let labels = [I, S, I, S];
        let m = classifier_metrics(&labels, &labels).unwrap();
        assert_eq!(m, ClassifierMetrics { accuracy: 1.0, precision: 1.0, recall: 1.0, f1: 1.0 });
        let m = classifier_metrics(&[I; 4], &labels).unwrap();
        assert_eq!((m.recall, m.precision, m.accuracy), (1.0, 0.5, 0.5));
    }

    #[test]
    fn errors() {
        assert!(classifier_metrics(&[I], &[I, S]).is_err());
        assert!(classifier_metrics(&[], &[]).is_err());
    }
}
