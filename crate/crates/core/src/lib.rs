//! Fine-grained information-status classification of noun-phrase mentions
//! with a self-attention encoder over discourse-aware pseudo sentences.

pub mod context;
pub mod corpus;
pub mod encoder;
pub mod rng;
pub mod scalar;
pub mod synthetic;
pub mod vocab;
pub mod eval;
pub mod cli;

pub use scalar::Real;

/// Double-precision parameters, the default for training and checkpoints.
pub type Parameters64 = encoder::Parameters<f64>;
/// Single-precision parameters.
pub type Parameters32 = encoder::Parameters<f32>;
pub type Trained64 = encoder::Trained<f64>;
pub type Trained32 = encoder::Trained<f32>;
pub type CrossValResult64 = eval::CrossValResult<f64>;
pub type CrossValResult32 = eval::CrossValResult<f32>;
