//! Classification metrics and seeded experiment partitioning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Metric values; degenerate denominators yield 0.0 with the corresponding
/// flag set instead of NaN, so fold averages stay finite.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    assert!(cm.total() > 0, "empty confusion matrix");
    let accuracy = (cm.tp + cm.tn) as f64 / cm.total() as f64;
    let precision_undefined = cm.tp + cm.fp == 0;
    let precision = if precision_undefined {
        0.0
    } else {
        cm.tp as f64 / (cm.tp + cm.fp) as f64
    };
    let recall_undefined = cm.tp + cm.fn_ == 0;
    let recall = if recall_undefined {
        0.0
    } else {
        cm.tp as f64 / (cm.tp + cm.fn_) as f64
    };
    let f1_undefined = precision_undefined || recall_undefined || precision + recall == 0.0;
    let f1 = if f1_undefined {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        accuracy,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    }
}

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("cannot partition an empty item list")]
    Empty,
    #[error("fractions must sum to 1 (got {0})")]
    BadFractions(f64),
}

/// Seeded disjoint partition with largest-remainder size rounding.
pub fn seeded_partition<T: Clone>(
    items: &[T],
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Vec<T>>, PartitionError> {
    if items.is_empty() {
        return Err(PartitionError::Empty);
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(PartitionError::BadFractions(sum));
    }
    let n = items.len();
    let ideal: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut short = n - sizes.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..fractions.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        (ideal[b] - ideal[b].floor())
            .partial_cmp(&(ideal[a] - ideal[a].floor()))
            .unwrap()
            .then(a.cmp(&b))
    });
    for &i in &by_remainder {
        if short == 0 {
            break;
        }
        sizes[i] += 1;
        short -= 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut groups = Vec::with_capacity(sizes.len());
    let mut cursor = 0;
    for size in sizes {
        let group = order[cursor..cursor + size]
            .iter()
            .map(|&i| items[i].clone())
            .collect();
        groups.push(group);
        cursor += size;
    }
    Ok(groups)
}

/// One CSV row per experiment result.
pub fn metrics_csv_header() -> &'static str {
    "scenario,mode,detector,fold,threshold,tp,fp,fn,tn,accuracy,precision,recall,f1\n"
}

#[allow(clippy::too_many_arguments)]
pub fn metrics_csv_row(
    scenario: &str,
    mode: &str,
    detector: &str,
    fold: usize,
    threshold: f64,
    cm: &ConfusionMatrix,
    m: &Metrics,
) -> String {
    format!(
        "{scenario},{mode},{detector},{fold},{threshold},{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
        cm.tp, cm.fp, cm.fn_, cm.tn, m.accuracy, m.precision, m.recall, m.f1
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_confusion_matrix() {
        let cm = ConfusionMatrix {
            tp: 72,
            fp: 20,
            fn_: 8,
            tn: 612,
        };
        let m = metrics(&cm);
        assert!((m.precision - 72.0 / 92.0).abs() < 1e-12);
        assert!((m.recall - 0.9).abs() < 1e-12);
        assert!((m.f1 - 0.8372).abs() < 1e-3);
    }

    #[test]
    fn all_true_positives() {
        let cm = ConfusionMatrix {
            tp: 7,
            ..Default::default()
        };
        let m = metrics(&cm);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn degenerate_denominators_flagged() {
        let cm = ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 5,
            tn: 5,
        };
        let m = metrics(&cm);
        assert!(m.precision_undefined);
        assert_eq!(m.precision, 0.0);
        assert!(!m.recall_undefined);
        assert_eq!(m.recall, 0.0);
        assert!(m.f1_undefined);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn f1_ignores_true_negatives() {
        let a = metrics(&ConfusionMatrix {
            tp: 10,
            fp: 5,
            fn_: 3,
            tn: 2,
        });
        let b = metrics(&ConfusionMatrix {
            tp: 10,
            fp: 5,
            fn_: 3,
            tn: 1002,
        });
        assert_eq!(a.f1, b.f1);
    }

    #[test]
    fn largest_remainder_sizes() {
        let items: Vec<u32> = (0..8).collect();
        let groups = seeded_partition(&items, &[0.75, 0.125, 0.125], 7).unwrap();
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![6, 1, 1]);
    }

    #[test]
    fn partition_is_disjoint_and_covering() {
        let items: Vec<u32> = (0..17).collect();
        let groups = seeded_partition(&items, &[0.5, 0.3, 0.2], 3).unwrap();
        let mut all: Vec<u32> = groups.concat();
        all.sort_unstable();
        assert_eq!(all, items);
    }

    #[test]
    fn identity_fraction() {
        let items = vec![1, 2, 3];
        let groups = seeded_partition(&items, &[1.0], 0).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 3);
    }

    #[test]
    fn seed_determinism() {
        let items: Vec<u32> = (0..20).collect();
        let a = seeded_partition(&items, &[0.5, 0.5], 42).unwrap();
        let b = seeded_partition(&items, &[0.5, 0.5], 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_items_error() {
        let items: Vec<u32> = vec![];
        assert!(seeded_partition(&items, &[1.0], 0).is_err());
    }
}
