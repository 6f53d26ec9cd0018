//! Cross-validation, scoring and significance testing.

pub mod crossval;
pub mod exchange;
pub mod folds;
pub mod metrics;
pub mod sigtest;

pub use crossval::{fold_seed, run_cross_validation, CrossValConfig, CrossValError, CrossValResult, FoldResult};
pub use folds::{split_folds, FoldError, FoldSplit};
pub use metrics::{confusion_matrix, score, ClassMetrics, Confusion, EvalReport, ScoreError};
pub use sigtest::{exact_p_value, null_distribution, randomization_test, NullDistribution, SigTestError, Statistic};
pub use exchange::{predictions_to_jsonl, read_predictions, write_predictions, ExchangeError, PredictionRecord};
