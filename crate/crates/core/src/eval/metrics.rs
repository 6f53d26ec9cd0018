//! Accuracy, per-class precision/recall/F1 and confusion matrices.

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{IsLabel, N_LABELS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("{predictions} predictions but {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("nothing to score")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ClassMetrics {
    pub p: f64,
    pub r: f64,
    pub f: f64,
    pub support: usize,
}

/// Per-class metrics in label order; serialized as an object keyed by label.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerClass(pub [ClassMetrics; N_LABELS]);

impl PerClass {
    pub fn get(&self, label: IsLabel) -> &ClassMetrics {
        &self.0[label.index()]
    }
}

impl Serialize for PerClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(N_LABELS))?;
        for label in IsLabel::ALL {
            map.serialize_entry(label.as_str(), self.get(label))?;
        }
        map.end()
    }
}

/// Rows are gold labels, columns predictions.
pub type Confusion = [[usize; N_LABELS]; N_LABELS];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n: usize,
    pub per_class: PerClass,
    pub confusion: Confusion,
    /// Held-out reports of the individual folds, when produced by
    /// cross-validation.
    pub folds: Vec<EvalReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// `num / den`, or 0 when `den` is 0.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn report_from_confusion(confusion: Confusion) -> EvalReport {
    let n: usize = confusion.iter().flatten().sum();
    let mut per_class = PerClass::default();
    let mut correct = 0;
    for c in 0..N_LABELS {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        per_class.0[c] = ClassMetrics { p, r, f, support };
        correct += tp;
    }
    EvalReport {
        accuracy: ratio(correct, n),
        n,
        per_class,
        confusion,
        folds: Vec::new(),
    }
}

pub fn confusion_matrix(predictions: &[IsLabel], gold: &[IsLabel]) -> Result<Confusion, ScoreError> {
    if predictions.len() != gold.len() {
        return Err(ScoreError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    let mut confusion = [[0; N_LABELS]; N_LABELS];
    for (p, g) in predictions.iter().zip(gold) {
        confusion[g.index()][p.index()] += 1;
    }
    Ok(confusion)
}

pub fn score(predictions: &[IsLabel], gold: &[IsLabel]) -> Result<EvalReport, ScoreError> {
    let confusion = confusion_matrix(predictions, gold)?;
    if gold.is_empty() {
        return Err(ScoreError::Empty);
    }
    Ok(report_from_confusion(confusion))
}
