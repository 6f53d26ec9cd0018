//! Central finite-difference check of the analytic gradients.

use serde::Serialize;

use super::model::{batch_loss, loss_and_gradients, Example};
use super::params::Parameters;
use super::EncoderError;
use crate::rng::SeededRng;

/// Denominator floor for the relative error `|a - n| / max(|a|, |n|, floor)`.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;
pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Check at most this many entries per tensor, chosen at random from
    /// `seed`. `None` checks every entry.
    pub max_entries_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_entries_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    pub worst_tensor: String,
    pub checked: usize,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares the analytic gradient of the mean batch loss (dropout off)
/// against central differences with step `options.epsilon`.
pub fn gradient_check(
    batch: &[Example],
    params: &Parameters<f64>,
    options: GradCheckOptions,
) -> Result<GradCheckReport, EncoderError> {
    let (_, grads) = loss_and_gradients(batch, params, None)?;
    let mut work = params.clone();
    let eps = options.epsilon;
    let mut tensors = Vec::with_capacity(params.tensors().len());

    for (ti, t) in params.tensors().iter().enumerate() {
        let mut idx: Vec<usize> = (0..t.data.len()).collect();
        if let Some(limit) = options.max_entries_per_tensor {
            if limit < idx.len() {
                SeededRng::keyed(options.seed, &[ti as u64]).shuffle(&mut idx);
                idx.truncate(limit);
                idx.sort_unstable();
            }
        }
        let mut check = TensorCheck {
            name: t.name.clone(),
            checked: idx.len(),
            max_relative_error: 0.0,
            max_abs_error: 0.0,
        };
        for &i in &idx {
            let original = t.data[i];
            work.slice_mut(ti)[i] = original + eps;
            let plus = batch_loss(batch, &work, None)?;
            work.slice_mut(ti)[i] = original - eps;
            let minus = batch_loss(batch, &work, None)?;
            work.slice_mut(ti)[i] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.tensors()[ti].data[i];
            check.max_abs_error = check.max_abs_error.max((analytic - numeric).abs());
            check.max_relative_error = check.max_relative_error.max(relative_error(analytic, numeric));
        }
        tensors.push(check);
    }

    let worst = tensors
        .iter()
        .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
        .expect("at least one tensor");
    Ok(GradCheckReport {
        max_relative_error: worst.max_relative_error,
        max_abs_error: tensors.iter().map(|t| t.max_abs_error).fold(0.0, f64::max),
        worst_tensor: worst.name.clone(),
        checked: tensors.iter().map(|t| t.checked).sum(),
        tensors,
    })
}
