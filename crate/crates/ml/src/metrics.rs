//! Confusion matrices and the five reported metrics.
//!
//! Binary tasks treat class 1 as positive. Multiclass precision, recall and
//! specificity are macro averages of the one-vs-rest values, and F1 is the
//! harmonic mean of the averaged precision and recall.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self { n: n_classes, counts: vec![0; n_classes * n_classes] }
    }

    pub fn from_predictions(n_classes: usize, truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(contract(format!("{} labels vs {} predictions", truth.len(), pred.len())));
        }
        let mut cm = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= n_classes || p >= n_classes {
                return Err(contract(format!("class index outside 0..{n_classes}")));
            }
            cm.counts[t * n_classes + p] += 1;
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    /// Row-major counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n, other.n, "class counts differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// `(tp, fp, fn, tn)` of class `c` against the rest.
    pub fn one_vs_rest(&self, c: usize) -> (u64, u64, u64, u64) {
        let tp = self.get(c, c);
        let row: u64 = (0..self.n).map(|p| self.get(c, p)).sum();
        let col: u64 = (0..self.n).map(|t| self.get(t, c)).sum();
        let (fp, fn_) = (col - tp, row - tp);
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }

    pub fn metrics(&self) -> Metrics {
        let total = self.total();
        let correct: u64 = (0..self.n).map(|c| self.get(c, c)).sum();
        let accuracy = ratio(correct, total);
        let per_class = |c: usize| {
            let (tp, fp, fn_, tn) = self.one_vs_rest(c);
            (ratio(tp, tp + fp), ratio(tp, tp + fn_), ratio(tn, tn + fp))
        };
        let (precision, recall, specificity) = if self.n == 2 {
            per_class(1)
        } else {
            let k = self.n as f64;
            (0..self.n).map(per_class).fold((0.0, 0.0, 0.0), |(a, b, c), (p, r, s)| (a + p / k, b + r / k, c + s / k))
        };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Metrics { accuracy, precision, recall, specificity, f1 }
    }
}

/// `num / den`, or 0 for an empty denominator.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub accuracy: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub specificity: Vec<f64>,
    pub f1: Vec<f64>,
}

/// Cross-validated metrics: overall values come from the summed confusion
/// matrix, per-fold values from each fold's own matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub folds: FoldMetrics,
    pub n_classes: usize,
    /// Summed confusion matrix, row-major `[true][predicted]`.
    pub confusion: Vec<u64>,
}

impl MetricsReport {
    pub fn from_folds(folds: &[ConfusionMatrix]) -> Result<Self> {
        let first = folds.first().ok_or_else(|| contract("no folds to report"))?;
        let mut sum = ConfusionMatrix::new(first.n_classes());
        let mut per = FoldMetrics::default();
        for cm in folds {
            if cm.n_classes() != sum.n_classes() {
                return Err(contract("folds disagree on the class count"));
            }
            sum.merge(cm);
            let m = cm.metrics();
            per.accuracy.push(m.accuracy);
            per.precision.push(m.precision);
            per.recall.push(m.recall);
            per.specificity.push(m.specificity);
            per.f1.push(m.f1);
        }
        let m = sum.metrics();
        Ok(Self {
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            specificity: m.specificity,
            f1: m.f1,
            folds: per,
            n_classes: sum.n_classes(),
            confusion: sum.counts().to_vec(),
        })
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy,
            precision: self.precision,
            recall: self.recall,
            specificity: self.specificity,
            f1: self.f1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(tp: usize, fp: usize, fn_: usize, tn: usize) -> ConfusionMatrix {
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for (t, p, n) in [(1, 1, tp), (0, 1, fp), (1, 0, fn_), (0, 0, tn)] {
            truth.extend(std::iter::repeat(t).take(n));
            pred.extend(std::iter::repeat(p).take(n));
        }
        ConfusionMatrix::from_predictions(2, &truth, &pred).unwrap()
    }

    #[test]
    fn hand_computed_binary_case() {
        let m = binary(3, 1, 1, 5).metrics();
        assert!((m.accuracy - 0.8).abs() < 1e-12);
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.75).abs() < 1e-12);
        assert!((m.specificity - 5.0 / 6.0).abs() < 1e-12);
        assert!((m.f1 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let y = [0, 1, 2, 2, 1, 0, 3];
        let m = ConfusionMatrix::from_predictions(4, &y, &y).unwrap().metrics();
        for v in [m.accuracy, m.precision, m.recall, m.specificity, m.f1] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn multiclass_is_macro_averaged() {
        // Class 2 is never predicted.
        let truth = [0, 0, 1, 1, 2, 2];
        let pred = [0, 0, 1, 1, 1, 0];
        let cm = ConfusionMatrix::from_predictions(3, &truth, &pred).unwrap();
        assert_eq!(cm.one_vs_rest(0), (2, 1, 0, 3));
        let m = cm.metrics();
        let p = (2.0 / 3.0 + 2.0 / 3.0 + 0.0) / 3.0;
        let r = (1.0 + 1.0 + 0.0) / 3.0;
        assert!((m.precision - p).abs() < 1e-12);
        assert!((m.recall - r).abs() < 1e-12);
        assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn report_sums_folds() {
        let r = MetricsReport::from_folds(&[binary(3, 1, 1, 5), binary(1, 0, 0, 1)]).unwrap();
        assert_eq!(r.confusion, vec![6, 1, 1, 4]);
        assert_eq!(r.folds.accuracy.len(), 2);
        assert_eq!(r.folds.accuracy[1], 1.0);
        assert!((r.accuracy - 10.0 / 12.0).abs() < 1e-12);
        assert!(MetricsReport::from_folds(&[]).is_err());
    }
}
