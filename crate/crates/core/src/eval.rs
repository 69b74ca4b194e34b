//! Classification metrics and multi-seed aggregation.

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{preds} predictions but {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("no reports to aggregate")]
    Empty,
    #[error("reports disagree on the number of classes")]
    ClassMismatch,
}

/// `counts[gold][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.num_classes()).map(|k| self.counts[k][k]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// Per-class `(precision, recall, f1, support)`; zero denominators give 0.
    pub fn per_class(&self) -> Vec<(f64, f64, f64, usize)> {
        let k = self.num_classes();
        (0..k)
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let predicted: usize = (0..k).map(|g| self.counts[g][c]).sum();
                let support: usize = self.counts[c].iter().sum();
                let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let recall = if support == 0 { 0.0 } else { tp / support as f64 };
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                (precision, recall, f1, support)
            })
            .collect()
    }
}

pub fn confusion(preds: &[usize], golds: &[usize], num_classes: usize) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    let mut counts = vec![vec![0; num_classes]; num_classes];
    for (&p, &g) in preds.iter().zip(golds) {
        for label in [p, g] {
            if label >= num_classes {
                return Err(EvalError::LabelOutOfRange { label, num_classes });
            }
        }
        counts[g][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Unweighted mean of per-class F1 over all classes, including classes
/// with no support (which contribute 0).
pub fn macro_f1(m: &ConfusionMatrix) -> f64 {
    let per = m.per_class();
    if per.is_empty() {
        return 0.0;
    }
    per.iter().map(|(_, _, f1, _)| f1).sum::<f64>() / per.len() as f64
}

fn six_decimals<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64((x * 1e6).round() / 1e6)
}

fn six_decimals_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| (x * 1e6).round() / 1e6))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(serialize_with = "six_decimals")]
    pub accuracy: f64,
    #[serde(serialize_with = "six_decimals")]
    pub macro_f1: f64,
    #[serde(serialize_with = "six_decimals_vec")]
    pub precision: Vec<f64>,
    #[serde(serialize_with = "six_decimals_vec")]
    pub recall: Vec<f64>,
    #[serde(serialize_with = "six_decimals_vec")]
    pub f1: Vec<f64>,
    pub support: Vec<usize>,
}

impl MetricsReport {
    pub fn from_confusion(m: &ConfusionMatrix) -> Self {
        let per = m.per_class();
        MetricsReport {
            accuracy: m.accuracy(),
            macro_f1: macro_f1(m),
            precision: per.iter().map(|r| r.0).collect(),
            recall: per.iter().map(|r| r.1).collect(),
            f1: per.iter().map(|r| r.2).collect(),
            support: per.iter().map(|r| r.3).collect(),
        }
    }

    pub fn from_predictions(preds: &[usize], golds: &[usize], num_classes: usize) -> Result<Self, EvalError> {
        Ok(Self::from_confusion(&confusion(preds, golds, num_classes)?))
    }

    pub fn num_classes(&self) -> usize {
        self.f1.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    #[serde(serialize_with = "six_decimals")]
    pub mean: f64,
    #[serde(serialize_with = "six_decimals")]
    pub std: f64,
}

impl MeanStd {
    /// Arithmetic mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub runs: usize,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub f1: Vec<MeanStd>,
}

pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<SeedSummary, EvalError> {
    let first = reports.first().ok_or(EvalError::Empty)?;
    let k = first.num_classes();
    if reports.iter().any(|r| r.num_classes() != k) {
        return Err(EvalError::ClassMismatch);
    }
    let col = |f: &dyn Fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(SeedSummary {
        runs: reports.len(),
        accuracy: col(&|r| r.accuracy),
        macro_f1: col(&|r| r.macro_f1),
        f1: (0..k).map(|c| col(&|r| r.f1[c])).collect(),
    })
}
