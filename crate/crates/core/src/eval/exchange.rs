//! Prediction exchange files: one JSON object per line with `mention_id`,
//! `document_id`, `gold`, `pred` and `probs`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{IsLabel, N_LABELS};
use crate::encoder::Prediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub mention_id: String,
    pub document_id: String,
    pub gold: Option<IsLabel>,
    pub pred: IsLabel,
    pub probs: [f64; N_LABELS],
}

impl From<&Prediction> for PredictionRecord {
    fn from(p: &Prediction) -> Self {
        Self {
            mention_id: p.mention_id.clone(),
            document_id: p.document_id.clone(),
            gold: p.gold,
            pred: p.label,
            probs: p.probabilities,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("prediction file io")]
    Io(#[from] std::io::Error),
    #[error("prediction file line {line}")]
    Json { line: usize, source: serde_json::Error },
}

pub fn predictions_to_jsonl(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(&PredictionRecord::from(p)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_predictions(predictions: &[Prediction], path: impl AsRef<Path>) -> Result<(), ExchangeError> {
    fs::write(path, predictions_to_jsonl(predictions))?;
    Ok(())
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, ExchangeError> {
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| ExchangeError::Json { line: i + 1, source }))
        .collect()
}
