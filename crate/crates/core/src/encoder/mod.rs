//! Self-attention encoder with an `[IS]` classification head.

use thiserror::Error;

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod predict;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use config::{ModelConfig, TrainConfig};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{
    argmax, backward, batch_loss, classify, forward, loss_and_gradients, predict_probs, DropoutKey, Example,
    ForwardCache, StepKey,
};
pub use ops::attention_weights;
pub use optim::{clip_global_norm, AdamW};
pub use params::{init_params, Parameters, Tensor, TensorRole};
pub use predict::{build_examples, predict, predict_examples, LabeledExample, Prediction};
pub use train::{train, train_with_monitor, EpochLog, TrainError, Trained};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("every key position is masked")]
    AllMasked,
    #[error("[IS] index {0} points at padding")]
    IsIndexMasked(usize),
    #[error("example {0} in batch has no gold label")]
    Unlabeled(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("pseudo sentence: {0}")]
    Input(String),
}
