//! Named tensor store.
//!
//! Tensors live in a flat list in a fixed order determined by the
//! [`ModelConfig`]; typed index helpers ([`ParamIndex`], [`LayerIndex`]) give
//! the forward and backward passes direct access. Gradients and optimizer
//! moments reuse the same layout.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};

use super::{EncoderError, ModelConfig};
use crate::rng::{name_key, SeededRng};
use crate::scalar::Real;

pub const INIT_STDDEV: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    /// Embedding table or projection matrix: truncated-normal init, decayed.
    Weight,
    /// Additive bias or normalization offset: zero init, not decayed.
    Bias,
    /// Normalization scale: one init, not decayed.
    Scale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: TensorRole,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

const PER_LAYER: usize = 16;
const HEAD: usize = 5;

/// Position of one transformer block's tensors in the store.
#[derive(Debug, Clone, Copy)]
pub struct LayerIndex {
    base: usize,
}

impl LayerIndex {
    pub fn query_w(self) -> usize { self.base }
    pub fn query_b(self) -> usize { self.base + 1 }
    pub fn key_w(self) -> usize { self.base + 2 }
    pub fn key_b(self) -> usize { self.base + 3 }
    pub fn value_w(self) -> usize { self.base + 4 }
    pub fn value_b(self) -> usize { self.base + 5 }
    pub fn output_w(self) -> usize { self.base + 6 }
    pub fn output_b(self) -> usize { self.base + 7 }
    pub fn attn_norm_scale(self) -> usize { self.base + 8 }
    pub fn attn_norm_offset(self) -> usize { self.base + 9 }
    pub fn inner_w(self) -> usize { self.base + 10 }
    pub fn inner_b(self) -> usize { self.base + 11 }
    pub fn outer_w(self) -> usize { self.base + 12 }
    pub fn outer_b(self) -> usize { self.base + 13 }
    pub fn ffn_norm_scale(self) -> usize { self.base + 14 }
    pub fn ffn_norm_offset(self) -> usize { self.base + 15 }
}

pub struct ParamIndex;

impl ParamIndex {
    pub const TOKEN: usize = 0;
    pub const POSITION: usize = 1;
    pub const SEGMENT: usize = 2;
    pub const EMB_NORM_SCALE: usize = 3;
    pub const EMB_NORM_OFFSET: usize = 4;

    pub fn layer(l: usize) -> LayerIndex {
        LayerIndex { base: HEAD + PER_LAYER * l }
    }

    pub fn classifier_w(n_layers: usize) -> usize {
        HEAD + PER_LAYER * n_layers
    }

    pub fn classifier_b(n_layers: usize) -> usize {
        HEAD + PER_LAYER * n_layers + 1
    }
}

/// `(name, shape, role)` of every tensor, in store order.
pub fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>, TensorRole)> {
    use TensorRole::*;
    let d = config.d_model;
    let f = config.d_ff;
    let mut out = vec![
        ("embeddings.token".to_owned(), vec![config.vocab_size, d], Weight),
        ("embeddings.position".to_owned(), vec![config.max_len, d], Weight),
        ("embeddings.segment".to_owned(), vec![2, d], Weight),
        ("embeddings.norm.scale".to_owned(), vec![d], Scale),
        ("embeddings.norm.offset".to_owned(), vec![d], Bias),
    ];
    for l in 0..config.n_layers {
        let p = |s: &str| format!("layer{l}.{s}");
        out.extend([
            (p("attention.query.weight"), vec![d, d], Weight),
            (p("attention.query.bias"), vec![d], Bias),
            (p("attention.key.weight"), vec![d, d], Weight),
            (p("attention.key.bias"), vec![d], Bias),
            (p("attention.value.weight"), vec![d, d], Weight),
            (p("attention.value.bias"), vec![d], Bias),
            (p("attention.output.weight"), vec![d, d], Weight),
            (p("attention.output.bias"), vec![d], Bias),
            (p("attention.norm.scale"), vec![d], Scale),
            (p("attention.norm.offset"), vec![d], Bias),
            (p("ffn.inner.weight"), vec![d, f], Weight),
            (p("ffn.inner.bias"), vec![f], Bias),
            (p("ffn.outer.weight"), vec![f, d], Weight),
            (p("ffn.outer.bias"), vec![d], Bias),
            (p("ffn.norm.scale"), vec![d], Scale),
            (p("ffn.norm.offset"), vec![d], Bias),
        ]);
    }
    out.push(("classifier.weight".to_owned(), vec![d, config.n_classes], Weight));
    out.push(("classifier.bias".to_owned(), vec![config.n_classes], Bias));
    out
}

/// Encoder parameters (or a gradient / moment buffer with the same layout).
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    config: ModelConfig,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> Parameters<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = layout(config)
            .into_iter()
            .map(|(name, shape, role)| {
                let n = shape.iter().product();
                Tensor {
                    name,
                    shape,
                    role,
                    data: vec![T::zero(); n],
                }
            })
            .collect();
        Self {
            config: *config,
            tensors,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Builds a store from tensors, checking names and shapes against the
    /// layout implied by `config`.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self, EncoderError> {
        config.validate()?;
        let expected = layout(&config);
        if expected.len() != tensors.len() {
            return Err(EncoderError::Shape(format!(
                "expected {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, shape, _), t) in expected.iter().zip(&tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(EncoderError::Shape(format!(
                    "tensor {}: expected {name} with shape {shape:?}, got shape {:?}",
                    t.name, t.shape
                )));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// Sum of squares over every entry.
    pub fn squared_norm(&self) -> T {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .fold(T::zero(), |acc, &x| acc + x * x)
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn cast<U: Real>(&self) -> Parameters<U> {
        Parameters {
            config: self.config,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    role: t.role,
                    data: t.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn mat(&self, i: usize) -> ArrayView2<'_, T> {
        let t = &self.tensors[i];
        ArrayView2::from_shape((t.shape[0], t.shape[1]), &t.data).expect("2-d tensor")
    }

    pub fn vec(&self, i: usize) -> ArrayView1<'_, T> {
        ArrayView1::from(&self.tensors[i].data[..])
    }

    pub fn mat_mut(&mut self, i: usize) -> ArrayViewMut2<'_, T> {
        let t = &mut self.tensors[i];
        ArrayViewMut2::from_shape((t.shape[0], t.shape[1]), &mut t.data).expect("2-d tensor")
    }

    pub fn vec_mut(&mut self, i: usize) -> ArrayViewMut1<'_, T> {
        ArrayViewMut1::from(&mut self.tensors[i].data[..])
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.tensors[i].data
    }
}

/// Random initialization: weights and embeddings from a normal with standard
/// deviation 0.02 truncated at two standard deviations, normalization scales
/// 1, biases and offsets 0. Each tensor draws from its own stream keyed by
/// `(seed, name)`.
pub fn init_params<T: Real>(config: &ModelConfig, seed: u64) -> Result<Parameters<T>, EncoderError> {
    config.validate()?;
    let mut params = Parameters::zeros(config);
    for t in &mut params.tensors {
        match t.role {
            TensorRole::Weight => {
                let mut rng = SeededRng::keyed(seed, &[name_key(&t.name)]);
                for x in &mut t.data {
                    *x = T::lit(rng.truncated_normal(INIT_STDDEV));
                }
            }
            TensorRole::Scale => t.data.iter_mut().for_each(|x| *x = T::one()),
            TensorRole::Bias => {}
        }
    }
    Ok(params)
}
