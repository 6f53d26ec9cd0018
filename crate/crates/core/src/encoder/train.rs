//! Mini-batch training loop.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{loss_and_gradients, Example, StepKey};
use super::optim::AdamW;
use super::params::{init_params, Parameters};
use super::{EncoderError, ModelConfig, TrainConfig};
use crate::rng::{name_key, SeededRng};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Example-weighted mean of the batch losses seen during the epoch.
    pub mean_loss: f64,
    pub steps: u64,
}

#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub params: Parameters<T>,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Error)]
pub enum TrainError<T: Real> {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}, step {step} (non-finite loss or parameters)")]
    Diverged {
        epoch: usize,
        step: u64,
        /// Parameters before the step that went non-finite.
        last_finite: Box<Parameters<T>>,
    },
}

/// Trains a freshly initialized model for `train_config.epochs` epochs.
pub fn train<T: Real>(
    dataset: &[Example],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<Trained<T>, TrainError<T>> {
    train_with_monitor(dataset, model_config, train_config, |_, _| ControlFlow::Continue(()))
}

/// Like [`train`], calling `monitor` after every epoch. Returning
/// `ControlFlow::Break` stops training early.
pub fn train_with_monitor<T: Real>(
    dataset: &[Example],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    mut monitor: impl FnMut(&EpochLog, &Parameters<T>) -> ControlFlow<()>,
) -> Result<Trained<T>, TrainError<T>> {
    model_config.validate()?;
    train_config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(i) = dataset.iter().position(|e| e.label.is_none()) {
        return Err(EncoderError::Unlabeled(i).into());
    }

    let mut params = init_params::<T>(model_config, train_config.seed)?;
    let mut opt = AdamW::new(&params, *train_config);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(train_config.epochs);
    let shuffle_key = name_key("shuffle");
    let mut batch = Vec::with_capacity(train_config.batch_size);

    for epoch in 0..train_config.epochs {
        SeededRng::keyed(train_config.seed, &[shuffle_key, epoch as u64]).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(train_config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i].clone()));
            let step = opt.steps();
            let key = StepKey {
                seed: train_config.seed,
                step,
            };
            let (loss, mut grads) = loss_and_gradients(&batch, &params, Some(key))?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    step,
                    last_finite: Box::new(params),
                });
            }
            let previous = params.clone();
            opt.step(&mut params, &mut grads);
            if !params.all_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    step,
                    last_finite: Box::new(previous),
                });
            }
            loss_sum += loss.as_f64() * chunk.len() as f64;
        }
        let entry = EpochLog {
            epoch,
            mean_loss: loss_sum / dataset.len() as f64,
            steps: opt.steps(),
        };
        log.push(entry);
        if monitor(&entry, &params).is_break() {
            break;
        }
    }
    Ok(Trained { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IsLabel;
    use crate::vocab::EncodedInput;

    fn cfg() -> ModelConfig {
        ModelConfig {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            max_len: 4,
            vocab_size: 12,
            n_classes: 8,
            dropout_rate: 0.1,
        }
    }

    fn data() -> Vec<Example> {
        (0..10u32)
            .map(|i| Example {
                input: EncodedInput {
                    ids: vec![8 + i % 4, 2, 0, 0],
                    attention_mask: vec![1, 1, 0, 0],
                    segment_ids: vec![1, 1, 0, 0],
                    is_index: 1,
                },
                label: Some(if i % 2 == 0 { IsLabel::Old } else { IsLabel::New }),
            })
            .collect()
    }

    #[test]
    fn step_count_and_determinism() {
        let tc = TrainConfig {
            epochs: 3,
            batch_size: 4,
            ..TrainConfig::desk()
        };
        let a = train::<f64>(&data(), &cfg(), &tc).unwrap();
        let b = train::<f64>(&data(), &cfg(), &tc).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params, b.params);
        // 3 epochs of ceil(10 / 4) = 3 steps.
        assert_eq!(a.log.last().unwrap().steps, 9);
    }

    #[test]
    fn zero_learning_rate_returns_initial_parameters() {
        let tc = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            ..TrainConfig::desk()
        };
        let out = train::<f64>(&data(), &cfg(), &tc).unwrap();
        assert_eq!(out.params, init_params::<f64>(&cfg(), tc.seed).unwrap());
    }

    #[test]
    fn monitor_can_stop_early() {
        let tc = TrainConfig {
            epochs: 10,
            ..TrainConfig::desk()
        };
        let out = train_with_monitor::<f64>(&data(), &cfg(), &tc, |e, _| {
            if e.epoch == 1 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(out.log.len(), 2);
    }

    #[test]
    fn rejects_empty_and_unlabeled_data() {
        let tc = TrainConfig::desk();
        assert!(matches!(train::<f64>(&[], &cfg(), &tc), Err(TrainError::EmptyDataset)));
        let mut d = data();
        d[3].label = None;
        assert!(matches!(
            train::<f64>(&d, &cfg(), &tc),
            Err(TrainError::Encoder(EncoderError::Unlabeled(3)))
        ));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let tc = TrainConfig {
            epochs: 50,
            learning_rate: 1e300,
            ..TrainConfig::desk()
        };
        match train::<f64>(&data(), &cfg(), &tc) {
            Err(TrainError::Diverged { last_finite, .. }) => assert!(last_finite.all_finite()),
            other => panic!("expected divergence, got {:?}", other.map(|t| t.log)),
        }
    }
}
