//! Confusion matrix and micro/macro F1 for single-label multiclass output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Dimension {
                op: "confusion",
                lhs: (y_true.len(), 1),
                rhs: (y_pred.len(), 1),
            });
        }
        let mut counts = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            let bad = if t >= n_classes { Some(t) } else if p >= n_classes { Some(p) } else { None };
            if let Some(index) = bad {
                return Err(Error::IndexOutOfRange {
                    index,
                    len: n_classes,
                });
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum()
    }

    fn nonempty(&self) -> Result<u64> {
        match self.total() {
            0 => Err(Error::EmptySplit("confusion matrix has no entries")),
            t => Ok(t),
        }
    }

    /// Micro-averaged F1; for single-label data this is accuracy.
    pub fn micro_f1(&self) -> Result<f64> {
        let total = self.nonempty()?;
        Ok(self.trace() as f64 / total as f64)
    }

    /// Unweighted mean of per-class F1. A class with P + R = 0 (including one
    /// absent from both truth and predictions) contributes 0.
    pub fn macro_f1(&self) -> Result<f64> {
        self.nonempty()?;
        let c = self.n_classes();
        let sum: f64 = (0..c).map(|k| self.class_f1(k)).sum();
        Ok(sum / c as f64)
    }

    pub fn class_f1(&self, k: usize) -> f64 {
        let tp = self.counts[k][k] as f64;
        let predicted: u64 = self.counts.iter().map(|row| row[k]).sum();
        let actual: u64 = self.counts[k].iter().sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    ConfusionMatrix::new(y_true, y_pred, n_classes)
}

pub fn micro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    cm.micro_f1()
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    cm.macro_f1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
}

impl F1Scores {
    pub fn from_labels(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Self> {
        let cm = confusion(y_true, y_pred, n_classes)?;
        Ok(F1Scores {
            micro: cm.micro_f1()?,
            macro_: cm.macro_f1()?,
        })
    }
}
