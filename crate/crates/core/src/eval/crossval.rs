//! Document-level k-fold cross-validation with pooled scoring.

use rayon::prelude::*;
use thiserror::Error;

use super::folds::{split_folds, FoldError, FoldSplit};
use super::metrics::{score, EvalReport};
use crate::context::ContextMode;
use crate::corpus::{Corpus, IsLabel};
use crate::encoder::predict::{build_examples, predict_examples, LabeledExample};
use crate::encoder::{train, EncoderError, EpochLog, ModelConfig, Parameters, Prediction, TrainConfig, TrainError};
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::vocab::{build_vocab, Vocab};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossValConfig {
    pub mode: ContextMode,
    /// `vocab_size` is replaced by the size of each fold's vocabulary.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub k: usize,
    /// Seed of the fold assignment.
    pub seed: u64,
    pub min_freq: usize,
    /// Folds trained concurrently. Results do not depend on it.
    pub jobs: usize,
}

#[derive(Debug, Error)]
pub enum CrossValError {
    #[error(transparent)]
    Folds(#[from] FoldError),
    #[error("fold {0} holds no mentions")]
    EmptyFold(usize),
    #[error("fold {0} leaves no training mentions")]
    EmptyTraining(usize),
    #[error("fold {fold}")]
    Encoder { fold: usize, source: EncoderError },
    #[error("fold {fold}: training diverged at epoch {epoch}, step {step}")]
    Diverged { fold: usize, epoch: usize, step: u64 },
    #[error("fold {0}: mention without gold label")]
    Unlabeled(usize),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct FoldResult<T> {
    pub fold: usize,
    pub train_seed: u64,
    pub vocab: Vocab,
    pub params: Parameters<T>,
    pub log: Vec<EpochLog>,
    /// Held-out predictions in corpus order.
    pub predictions: Vec<Prediction>,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct CrossValResult<T> {
    pub split: FoldSplit,
    /// Pooled report; `report.folds` holds the per-fold reports.
    pub report: EvalReport,
    /// Held-out predictions of every mention, in corpus order.
    pub predictions: Vec<Prediction>,
    pub folds: Vec<FoldResult<T>>,
}

/// Training seed of fold `fold`.
pub fn fold_seed(train_seed: u64, fold: usize) -> u64 {
    derive_seed(train_seed, &[fold as u64])
}

fn gold_labels(preds: &[Prediction], fold: usize) -> Result<Vec<IsLabel>, CrossValError> {
    preds.iter().map(|p| p.gold.ok_or(CrossValError::Unlabeled(fold))).collect()
}

fn run_fold<T: Real>(
    corpus: &Corpus,
    split: &FoldSplit,
    fold: usize,
    config: &CrossValConfig,
) -> Result<FoldResult<T>, CrossValError> {
    let (train_corpus, test_corpus) = split.partition(corpus, fold);
    if test_corpus.n_mentions() == 0 {
        return Err(CrossValError::EmptyFold(fold));
    }
    if train_corpus.n_mentions() == 0 {
        return Err(CrossValError::EmptyTraining(fold));
    }
    let enc = |source| CrossValError::Encoder { fold, source };

    let vocab = build_vocab(&train_corpus, config.mode, config.min_freq);
    let model = ModelConfig {
        vocab_size: vocab.len(),
        ..config.model
    };
    let train_seed = fold_seed(config.train.seed, fold);
    let train_config = TrainConfig {
        seed: train_seed,
        ..config.train
    };
    let to_examples = |c: &Corpus| -> Result<Vec<LabeledExample>, CrossValError> {
        build_examples(c, config.mode, &vocab, model.max_len).map_err(enc)
    };
    let train_items: Vec<_> = to_examples(&train_corpus)?.into_iter().map(|i| i.example).collect();
    let test_items = to_examples(&test_corpus)?;

    let trained = train::<T>(&train_items, &model, &train_config).map_err(|e| match e {
        TrainError::Encoder(source) => enc(source),
        TrainError::EmptyDataset => CrossValError::EmptyTraining(fold),
        TrainError::Diverged { epoch, step, .. } => CrossValError::Diverged { fold, epoch, step },
    })?;
    let predictions = predict_examples(&test_items, &trained.params).map_err(enc)?;
    let pred_labels: Vec<IsLabel> = predictions.iter().map(|p| p.label).collect();
    let report = score(&pred_labels, &gold_labels(&predictions, fold)?).expect("non-empty, equal lengths");

    Ok(FoldResult {
        fold,
        train_seed,
        vocab,
        params: trained.params,
        log: trained.log,
        predictions,
        report,
    })
}

/// Trains on `k - 1` folds and predicts the held-out fold, for every fold,
/// then scores the pooled held-out predictions.
pub fn run_cross_validation<T: Real>(
    corpus: &Corpus,
    config: &CrossValConfig,
) -> Result<CrossValResult<T>, CrossValError> {
    let split = split_folds(corpus, config.k, config.seed)?;
    let run = || -> Result<Vec<FoldResult<T>>, CrossValError> {
        (0..config.k)
            .into_par_iter()
            .map(|f| run_fold::<T>(corpus, &split, f, config))
            .collect()
    };
    let folds = if config.jobs <= 1 {
        (0..config.k)
            .map(|f| run_fold::<T>(corpus, &split, f, config))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| CrossValError::Pool(e.to_string()))?
            .install(run)?
    };

    // Pool in corpus order.
    let mut predictions = Vec::with_capacity(corpus.n_mentions());
    for doc in &corpus.documents {
        let fold = &folds[split.fold_of(&doc.id).expect("every document assigned")];
        predictions.extend(fold.predictions.iter().filter(|p| p.document_id == doc.id).cloned());
    }
    let pred_labels: Vec<IsLabel> = predictions.iter().map(|p| p.label).collect();
    let gold: Vec<IsLabel> = predictions.iter().map(|p| p.gold.expect("checked per fold")).collect();
    let mut report = score(&pred_labels, &gold).expect("non-empty pooled set");
    report.folds = folds.iter().map(|f| f.report.clone()).collect();

    Ok(CrossValResult {
        split,
        report,
        predictions,
        folds,
    })
}
