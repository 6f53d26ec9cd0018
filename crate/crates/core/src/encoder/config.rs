use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::corpus::N_LABELS;

/// Encoder shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    /// 2 layers, 64 hidden units, 4 heads, 256 feed-forward units, 64 tokens.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            max_len: 64,
            vocab_size,
            n_classes: N_LABELS,
            dropout_rate: 0.1,
        }
    }

    /// BERT-base shape: 12 layers, 768 hidden units, 12 heads, 128 tokens.
    pub fn paper(vocab_size: usize) -> Self {
        Self {
            n_layers: 12,
            d_model: 768,
            n_heads: 12,
            d_ff: 3072,
            max_len: 128,
            vocab_size,
            n_classes: N_LABELS,
            dropout_rate: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let fail = |msg: String| Err(EncoderError::Config(msg));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return fail("d_model, n_heads and d_ff must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.n_classes != N_LABELS {
            return fail(format!("n_classes must be {N_LABELS}, got {}", self.n_classes));
        }
        if self.max_len < 2 {
            return fail(format!("max_len must be >= 2, got {}", self.max_len));
        }
        if self.vocab_size < crate::context::RESERVED.len() {
            return fail(format!("vocab_size {} smaller than the reserved token set", self.vocab_size));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }
}

/// Optimization settings. The optimizer is AdamW with global-norm clipping
/// and a constant learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
}

impl TrainConfig {
    /// Settings for training the desk-scale model from scratch.
    pub fn desk() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 16,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            grad_clip_norm: 1.0,
        }
    }

    /// Fine-tuning settings of the paper-scale model: 3 epochs at 5e-5.
    pub fn paper() -> Self {
        Self {
            epochs: 3,
            learning_rate: 5e-5,
            batch_size: 32,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let fail = |msg: &str| Err(EncoderError::Config(msg.to_owned()));
        if self.epochs == 0 {
            return fail("epochs must be >= 1");
        }
        let lr_ok = self.learning_rate >= 0.0 && self.learning_rate.is_finite();
        if !lr_ok {
            return fail("learning_rate must be a finite non-negative number");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)");
        }
        let positive = self.epsilon > 0.0 && self.grad_clip_norm > 0.0 && self.weight_decay >= 0.0;
        if !positive {
            return fail("epsilon and grad_clip_norm must be positive, weight_decay non-negative");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}
