//! Confusion-matrix accumulation with accuracy, MCC and undetected rate.
//!
//! Class 1 (attack) is the positive class throughout.

use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("accuracy of an empty confusion matrix is undefined")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts one (truth, predicted) pair.
    pub fn accumulate(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Attack, Label::Attack) => self.tp += 1,
            (Label::Normal, Label::Normal) => self.tn += 1,
            (Label::Normal, Label::Attack) => self.fp += 1,
            (Label::Attack, Label::Normal) => self.fn_ += 1,
        }
    }

    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Label, Label)>,
    {
        let mut cm = Self::new();
        for (truth, predicted) in pairs {
            cm.accumulate(truth, predicted);
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Field-wise sum, for merging evaluation shards.
    pub fn merge(&self, other: &Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    /// Matthews correlation coefficient; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (
            self.tp as f64,
            self.tn as f64,
            self.fp as f64,
            self.fn_ as f64,
        );
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return 0.0;
        }
        let mcc = (tp * tn - fp * fn_) / denom.sqrt();
        mcc.clamp(-1.0, 1.0)
    }

    pub fn accuracy(&self) -> Result<f64, MetricsError> {
        let total = self.total();
        if total == 0 {
            return Err(MetricsError::Empty);
        }
        Ok((self.tp + self.tn) as f64 / total as f64)
    }

    /// FN / (FN + TP). With no attack samples the rate is 0 and flagged degenerate.
    pub fn undetected_rate(&self) -> UndetectedRate {
        let attacks = self.fn_ + self.tp;
        if attacks == 0 {
            return UndetectedRate {
                value: 0.0,
                degenerate: true,
            };
        }
        UndetectedRate {
            value: self.fn_ as f64 / attacks as f64,
            degenerate: false,
        }
    }

    /// TN / (TN + FP), or 0 without normal samples.
    pub fn recall_normal(&self) -> f64 {
        let normals = self.tn + self.fp;
        if normals == 0 {
            0.0
        } else {
            self.tn as f64 / normals as f64
        }
    }

    /// TP / (TP + FN), or 0 without attack samples.
    pub fn recall_attack(&self) -> f64 {
        let attacks = self.tp + self.fn_;
        if attacks == 0 {
            0.0
        } else {
            self.tp as f64 / attacks as f64
        }
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, rhs: Self) -> Self::Output {
        self.merge(&rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UndetectedRate {
    pub value: f64,
    pub degenerate: bool,
}

/// Flattened metric values for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub mcc: f64,
    pub ur: f64,
    pub ur_degenerate: bool,
    #[serde(flatten)]
    pub confusion: ConfusionMatrix,
}

impl From<&ConfusionMatrix> for MetricSummary {
    fn from(cm: &ConfusionMatrix) -> Self {
        let ur = cm.undetected_rate();
        MetricSummary {
            accuracy: cm.accuracy().unwrap_or(0.0),
            mcc: cm.mcc(),
            ur: ur.value,
            ur_degenerate: ur.degenerate,
            confusion: *cm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Attack, Normal};

    fn cm(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    #[test]
    fn accumulate_hits_one_counter() {
        let mut m = ConfusionMatrix::new();
        m.accumulate(Attack, Attack);
        assert_eq!(m, cm(1, 0, 0, 0));
        m.accumulate(Attack, Normal);
        assert_eq!(m, cm(1, 0, 0, 1));
        m.accumulate(Normal, Attack);
        m.accumulate(Normal, Normal);
        assert_eq!(m, cm(1, 1, 1, 1));
    }

    #[test]
    fn mcc_cases() {
        assert_eq!(cm(5, 5, 0, 0).mcc(), 1.0);
        assert_eq!(cm(2, 2, 1, 1).mcc(), 1.0 / 3.0);
        // predicting everything as attack leaves a zero marginal
        assert_eq!(cm(10, 0, 7, 0).mcc(), 0.0);
        assert_eq!(cm(0, 0, 0, 0).mcc(), 0.0);
        assert_eq!(cm(0, 0, 5, 5).mcc(), -1.0);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(cm(5, 5, 0, 0).accuracy().unwrap(), 1.0);
        assert!((cm(98, 886, 6, 10).accuracy().unwrap() - 0.984).abs() < 1e-15);
        assert_eq!(cm(0, 0, 3, 4).accuracy().unwrap(), 0.0);
        assert_eq!(cm(0, 0, 0, 0).accuracy(), Err(MetricsError::Empty));
    }

    #[test]
    fn undetected_rate_cases() {
        assert_eq!(cm(10, 3, 1, 0).undetected_rate().value, 0.0);
        assert_eq!(cm(3, 0, 0, 1).undetected_rate().value, 0.25);
        let ur = cm(0, 9, 1, 0).undetected_rate();
        assert_eq!(ur.value, 0.0);
        assert!(ur.degenerate);
    }

    #[test]
    fn merge_is_fieldwise() {
        assert_eq!(cm(1, 2, 3, 4) + cm(10, 20, 30, 40), cm(11, 22, 33, 44));
    }

    #[test]
    fn mcc_swap_symmetry() {
        for (tp, tn, fp, fn_) in [(3, 9, 2, 1), (40, 2, 7, 11), (1, 1, 1, 0)] {
            let a = cm(tp, tn, fp, fn_).mcc();
            let b = cm(tn, tp, fn_, fp).mcc();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn undetected_rate_monotone_in_fn() {
        let attacks = 20;
        let mut prev = f64::INFINITY;
        for fn_ in (0..=attacks).rev() {
            let ur = cm(attacks - fn_, 5, 5, fn_).undetected_rate().value;
            assert!(ur < prev);
            prev = ur;
        }
    }
}
