//! End-to-end prediction: pseudo sentence, encoding, encoder, head.

use serde::{Deserialize, Serialize};

use super::model::{argmax, predict_probs, Example};
use super::params::Parameters;
use super::EncoderError;
use crate::context::{build_pseudo_sentence, ContextMode};
use crate::corpus::{Corpus, IsLabel, N_LABELS};
use crate::scalar::Real;
use crate::vocab::{encode, Vocab};

/// An encoded mention together with where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub document_id: String,
    pub mention_id: String,
    pub example: Example,
}

/// Encodes every mention of `corpus` in corpus order.
pub fn build_examples(
    corpus: &Corpus,
    mode: ContextMode,
    vocab: &Vocab,
    max_len: usize,
) -> Result<Vec<LabeledExample>, EncoderError> {
    corpus
        .mentions()
        .map(|(doc, m)| {
            let ps = build_pseudo_sentence(m, doc, mode, max_len)
                .map_err(|e| EncoderError::Input(e.to_string()))?;
            let input = encode(&ps, vocab, max_len).map_err(|e| EncoderError::Input(e.to_string()))?;
            Ok(LabeledExample {
                document_id: doc.id.clone(),
                mention_id: m.id.clone(),
                example: Example { input, label: m.label },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub document_id: String,
    pub mention_id: String,
    pub gold: Option<IsLabel>,
    pub label: IsLabel,
    pub probabilities: [f64; N_LABELS],
}

impl Prediction {
    pub fn from_probabilities<T: Real>(item: &LabeledExample, probs: &[T; N_LABELS]) -> Self {
        let probabilities = probs.map(|p| p.as_f64());
        Self {
            document_id: item.document_id.clone(),
            mention_id: item.mention_id.clone(),
            gold: item.example.label,
            label: IsLabel::ALL[argmax(&probabilities)],
            probabilities,
        }
    }
}

/// Predictions for already encoded items, in input order.
pub fn predict_examples<T: Real>(
    items: &[LabeledExample],
    params: &Parameters<T>,
) -> Result<Vec<Prediction>, EncoderError> {
    items
        .iter()
        .map(|item| Ok(Prediction::from_probabilities(item, &predict_probs(&item.example, params)?)))
        .collect()
}

/// One prediction per mention of `corpus`, in corpus order.
pub fn predict<T: Real>(
    corpus: &Corpus,
    mode: ContextMode,
    vocab: &Vocab,
    params: &Parameters<T>,
) -> Result<Vec<Prediction>, EncoderError> {
    if vocab.len() != params.config().vocab_size {
        return Err(EncoderError::Config(format!(
            "vocabulary has {} entries but the model expects {}",
            vocab.len(),
            params.config().vocab_size
        )));
    }
    let items = build_examples(corpus, mode, vocab, params.config().max_len)?;
    predict_examples(&items, params)
}
