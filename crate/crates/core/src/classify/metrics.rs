use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ClassId;

/// Confusion-matrix based accuracy summary. Rows of `confusion` index the
/// true class and columns the predicted class, both in `classes` order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classes: Vec<ClassId>,
    pub confusion: Vec<Vec<u64>>,
    pub total: u64,
    pub correct: u64,
    pub overall_accuracy: f64,
    pub kappa: f64,
    /// Harmonic mean of producer's and user's accuracy per class.
    pub f_measure: Vec<f64>,
}

impl EvalReport {
    /// Kappa as a reduced fraction `(numerator, denominator)` of integers.
    pub fn kappa_fraction(&self) -> (i128, i128) {
        let n = self.total as i128;
        let chance: i128 = (0..self.classes.len())
            .map(|i| self.row_total(i) as i128 * self.col_total(i) as i128)
            .sum();
        let (num, den) = (n * self.correct as i128 - chance, n * n - chance);
        if den == 0 {
            return (1, 1);
        }
        let g = gcd(num.abs(), den.abs()).max(1);
        (num / g, den / g)
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.confusion[i].iter().sum()
    }

    pub fn col_total(&self, j: usize) -> u64 {
        self.confusion.iter().map(|r| r[j]).sum()
    }

    /// Recall of each class (0 for classes absent from the truth).
    pub fn producer_accuracy(&self) -> Vec<f64> {
        (0..self.classes.len())
            .map(|i| ratio(self.confusion[i][i], self.row_total(i)))
            .collect()
    }

    /// Precision of each class (0 for classes never predicted).
    pub fn user_accuracy(&self) -> Vec<f64> {
        (0..self.classes.len())
            .map(|i| ratio(self.confusion[i][i], self.col_total(i)))
            .collect()
    }

    pub fn from_confusion(classes: Vec<ClassId>, confusion: Vec<Vec<u64>>) -> Result<Self> {
        let k = classes.len();
        if k == 0 || confusion.len() != k || confusion.iter().any(|r| r.len() != k) {
            return Err(Error::dims("confusion matrix must be square over the class list"));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Empty("confusion matrix"));
        }
        let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let mut report = Self {
            classes,
            confusion,
            total,
            correct,
            overall_accuracy: correct as f64 / total as f64,
            kappa: 0.0,
            f_measure: Vec::new(),
        };
        let (num, den) = report.kappa_fraction();
        report.kappa = num as f64 / den as f64;
        report.f_measure = (0..k)
            .map(|i| ratio(2 * report.confusion[i][i], report.row_total(i) + report.col_total(i)))
            .collect();
        Ok(report)
    }
}

/// Builds the report over the union of classes seen in `pred` and `truth`.
pub fn evaluate(pred: &[ClassId], truth: &[ClassId]) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::dims(format!("{} predictions for {} truth labels", pred.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::Empty("truth labels"));
    }
    let classes: Vec<ClassId> = pred.iter().chain(truth).copied().collect::<BTreeSet<_>>().into_iter().collect();
    let pos = |c: ClassId| classes.binary_search(&c).expect("class collected above");
    let mut confusion = vec![vec![0u64; classes.len()]; classes.len()];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[pos(t)][pos(p)] += 1;
    }
    EvalReport::from_confusion(classes, confusion)
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
