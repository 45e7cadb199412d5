//! Confusion matrices and the WAR/UAR pair. Metrics are computed in exact
//! rational arithmetic and converted to f64 only at the edge, so equal
//! rationals always yield equal reported numbers.

use num::rational::BigRational;
use num::{BigInt, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// C x C counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<ConfusionMatrix> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::dimension(
                "confusion matrix",
                format!("{num_classes}x{num_classes}"),
                format!("{} counts", counts.len()),
            ));
        }
        Ok(ConfusionMatrix {
            num_classes,
            counts,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class * self.num_classes + predicted] += 1;
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.num_classes + predicted]
    }

    pub fn row_sum(&self, true_class: usize) -> u64 {
        (0..self.num_classes)
            .map(|p| self.get(true_class, p))
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Merge counts from another matrix (parallel evaluation shards).
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::dimension(
                "confusion merge",
                self.num_classes,
                other.num_classes,
            ));
        }
        for (dst, src) in self.counts.iter_mut().zip(&other.counts) {
            *dst += src;
        }
        Ok(())
    }

    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::new();
        out.push_str(&class_names.join(","));
        out.push('\n');
        for r in 0..self.num_classes {
            let row: Vec<String> = (0..self.num_classes)
                .map(|c| self.get(r, c).to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Exact metric values; convert with [`ExactMetrics::to_f64`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMetrics {
    pub war: BigRational,
    pub uar: BigRational,
    pub per_class_recall: Vec<BigRational>,
}

impl ExactMetrics {
    pub fn to_f64(&self) -> (f64, f64, Vec<f64>) {
        (
            self.war.to_f64().expect("finite rational"),
            self.uar.to_f64().expect("finite rational"),
            self.per_class_recall
                .iter()
                .map(|r| r.to_f64().expect("finite rational"))
                .collect(),
        )
    }
}

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// war = trace/total, recall_c = diag_c/rowsum_c, uar = mean of recalls.
/// Every class must have at least one true sample.
pub fn metrics_exact(cm: &ConfusionMatrix) -> Result<ExactMetrics> {
    let c = cm.num_classes();
    if c == 0 {
        return Err(Error::Degenerate("empty confusion matrix".into()));
    }
    for class in 0..c {
        if cm.row_sum(class) == 0 {
            return Err(Error::UndefinedRecall(class));
        }
    }
    let total = cm.total();
    let trace: u64 = (0..c).map(|i| cm.get(i, i)).sum();
    let war = ratio(trace, total);
    let per_class_recall: Vec<BigRational> = (0..c)
        .map(|class| ratio(cm.get(class, class), cm.row_sum(class)))
        .collect();
    let sum = per_class_recall
        .iter()
        .fold(BigRational::zero(), |acc, r| acc + r);
    let uar = sum / BigRational::new(BigInt::from(c), BigInt::from(1u8));
    Ok(ExactMetrics {
        war,
        uar,
        per_class_recall,
    })
}

/// (war, uar, per-class recalls) as f64.
pub fn metrics(cm: &ConfusionMatrix) -> Result<(f64, f64, Vec<f64>)> {
    Ok(metrics_exact(cm)?.to_f64())
}

/// Evaluation summary emitted as JSON and as an aligned text table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub war: f64,
    pub uar: f64,
    pub per_class_recall: Vec<f64>,
    /// (visual, audio, text) presence forced during evaluation.
    pub presence_pattern: [bool; 3],
    /// Retained classes, when a subset protocol was applied.
    pub class_subset: Option<Vec<usize>>,
    pub checkpoint_hash: String,
    pub num_samples: u64,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>10.6}\n", "WAR", self.war));
        out.push_str(&format!("{:<12} {:>10.6}\n", "UAR", self.uar));
        for (c, r) in self.per_class_recall.iter().enumerate() {
            out.push_str(&format!("{:<12} {:>10.6}\n", format!("recall[{c}]"), r));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent hand-count oracle: loops over raw counts and computes
    /// exact rationals without going through ConfusionMatrix accessors.
    fn oracle(counts: &[u64], c: usize) -> (BigRational, BigRational) {
        let total: u64 = counts.iter().sum();
        let mut trace = 0u64;
        let mut recall_sum = BigRational::zero();
        for i in 0..c {
            trace += counts[i * c + i];
            let row: u64 = counts[i * c..(i + 1) * c].iter().sum();
            recall_sum += ratio(counts[i * c + i], row);
        }
        let war = ratio(trace, total);
        let uar = recall_sum / BigRational::new(BigInt::from(c), BigInt::from(1u8));
        (war, uar)
    }

    #[test]
    fn diagonal_matrix_is_perfect() {
        let mut cm = ConfusionMatrix::new(3);
        for c in 0..3 {
            for _ in 0..5 {
                cm.record(c, c);
            }
        }
        let (war, uar, recalls) = metrics(&cm).unwrap();
        assert_eq!(war, 1.0);
        assert_eq!(uar, 1.0);
        assert!(recalls.iter().all(|r| *r == 1.0));
    }

    #[test]
    fn worked_example_war_086_uar_070() {
        // rows: 90 true with 81 correct, 10 true with 5 correct
        let counts = vec![81, 9, 5, 5];
        let cm = ConfusionMatrix::from_counts(2, counts).unwrap();
        let (war, uar, recalls) = metrics(&cm).unwrap();
        assert_eq!(war, 0.86);
        assert_eq!(uar, 0.70);
        assert_eq!(recalls, vec![0.9, 0.5]);
    }

    #[test]
    fn matches_rational_oracle_on_random_matrices() {
        // simple deterministic pseudo-random counts
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) % 50
        };
        for trial in 0..50 {
            let c = 2 + (trial % 6);
            let mut counts: Vec<u64> = (0..c * c).map(|_| next()).collect();
            // guarantee nonzero rows
            for i in 0..c {
                counts[i * c + i] += 1;
            }
            let cm = ConfusionMatrix::from_counts(c, counts.clone()).unwrap();
            let exact = metrics_exact(&cm).unwrap();
            let (war_o, uar_o) = oracle(&counts, c);
            assert_eq!(exact.war, war_o, "trial {trial}");
            assert_eq!(exact.uar, uar_o, "trial {trial}");
        }
    }

    #[test]
    fn empty_class_row_names_the_class() {
        let mut cm = ConfusionMatrix::new(3);
        cm.record(0, 0);
        cm.record(2, 1);
        match metrics(&cm) {
            Err(Error::UndefinedRecall(1)) => {}
            other => panic!("expected UndefinedRecall(1), got {other:?}"),
        }
    }

    #[test]
    fn war_bounded_by_recall_extremes() {
        let counts = vec![8, 2, 0, 3, 6, 1, 1, 1, 8];
        let cm = ConfusionMatrix::from_counts(3, counts).unwrap();
        let (war, _, recalls) = metrics(&cm).unwrap();
        let min = recalls.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = recalls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(war >= min && war <= max);
    }

    #[test]
    fn balanced_classes_make_war_equal_uar() {
        // equal row sums; war and uar are the same rational
        let counts = vec![7, 2, 1, 3, 5, 2, 0, 4, 6];
        let cm = ConfusionMatrix::from_counts(3, counts).unwrap();
        let exact = metrics_exact(&cm).unwrap();
        assert_eq!(exact.war, exact.uar);
        let (war, uar, _) = exact.to_f64();
        assert_eq!(war, uar);
    }

    #[test]
    fn uar_invariant_under_class_relabeling() {
        let counts = vec![8, 2, 0, 3, 6, 1, 1, 1, 18];
        let cm = ConfusionMatrix::from_counts(3, counts.clone()).unwrap();
        // permute classes with sigma = (2, 0, 1)
        let sigma = [2usize, 0, 1];
        let mut permuted = vec![0u64; 9];
        for i in 0..3 {
            for j in 0..3 {
                permuted[sigma[i] * 3 + sigma[j]] = counts[i * 3 + j];
            }
        }
        let cm_p = ConfusionMatrix::from_counts(3, permuted).unwrap();
        let a = metrics_exact(&cm).unwrap();
        let b = metrics_exact(&cm_p).unwrap();
        assert_eq!(a.uar, b.uar);
        assert_eq!(a.war, b.war); // permutation preserves per-class counts
    }

    #[test]
    fn csv_shape() {
        let mut cm = ConfusionMatrix::new(2);
        cm.record(0, 1);
        cm.record(1, 1);
        let csv = cm.to_csv(&["a".into(), "b".into()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, vec!["a,b", "0,1", "0,1"]);
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = ConfusionMatrix::new(2);
        a.record(0, 0);
        let mut b = ConfusionMatrix::new(2);
        b.record(0, 0);
        b.record(1, 0);
        a.merge(&b).unwrap();
        assert_eq!(a.get(0, 0), 2);
        assert_eq!(a.get(1, 0), 1);
    }
}
