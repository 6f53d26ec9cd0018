//! Document-level fold assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::rng::{name_key, SeededRng};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FoldError {
    #[error("k must be >= 1")]
    ZeroFolds,
    #[error("k = {k} exceeds the number of documents ({documents})")]
    TooManyFolds { k: usize, documents: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    /// Document id to fold index in `0..k`.
    pub assignments: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, document_id: &str) -> Option<usize> {
        self.assignments.get(document_id).copied()
    }

    /// Number of documents in each fold.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(training, held-out)` corpora for `fold`, each in corpus order.
    pub fn partition(&self, corpus: &Corpus, fold: usize) -> (Corpus, Corpus) {
        let train = corpus.subset(|d| self.fold_of(&d.id) != Some(fold));
        let test = corpus.subset(|d| self.fold_of(&d.id) == Some(fold));
        (train, test)
    }
}

/// Shuffles the documents with `seed`, then deals them round-robin into `k`
/// folds.
pub fn split_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldSplit, FoldError> {
    let documents = corpus.documents.len();
    if k == 0 {
        return Err(FoldError::ZeroFolds);
    }
    if k > documents {
        return Err(FoldError::TooManyFolds { k, documents });
    }
    let mut order: Vec<usize> = (0..documents).collect();
    SeededRng::keyed(seed, &[name_key("folds")]).shuffle(&mut order);
    let assignments = order
        .iter()
        .enumerate()
        .map(|(pos, &d)| (corpus.documents[d].id.clone(), pos % k))
        .collect();
    Ok(FoldSplit { k, assignments })
}
