//! AdamW with decoupled weight decay and global-norm gradient clipping.

use super::params::{Parameters, TensorRole};
use super::TrainConfig;
use crate::scalar::Real;

/// Rescales `grads` in place so that their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut Parameters<T>, max_norm: f64) -> T {
    let norm = grads.squared_norm().sqrt();
    let max = T::lit(max_norm);
    if norm > max {
        grads.scale(max / norm);
    }
    norm
}

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    config: TrainConfig,
    m: Parameters<T>,
    v: Parameters<T>,
    steps: u64,
}

impl<T: Real> AdamW<T> {
    pub fn new(params: &Parameters<T>, config: TrainConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Clips `grads`, then applies one update. Weight decay only touches
    /// weight matrices and embeddings. A zero learning rate leaves the
    /// parameters untouched. Returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut Parameters<T>, grads: &mut Parameters<T>) -> T {
        let norm = clip_global_norm(grads, self.config.grad_clip_norm);
        self.steps += 1;
        if self.config.learning_rate == 0.0 {
            return norm;
        }
        let c = &self.config;
        let t = self.steps as i32;
        let lr = T::lit(c.learning_rate);
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let bc1 = one - T::lit(c.beta1.powi(t));
        let bc2 = one - T::lit(c.beta2.powi(t));
        let eps = T::lit(c.epsilon);
        let wd = T::lit(c.weight_decay);

        let tensors = params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().iter_mut().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            let decay = if p.role == TensorRole::Weight { wd } else { T::zero() };
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                let pi = p.data[i];
                p.data[i] = pi - lr * (mhat / (vhat.sqrt() + eps) + decay * pi);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, ModelConfig};

    fn cfg() -> ModelConfig {
        ModelConfig {
            n_layers: 1,
            d_model: 4,
            n_heads: 1,
            d_ff: 4,
            max_len: 4,
            vocab_size: 9,
            n_classes: 8,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let p = init_params::<f64>(&cfg(), 1).unwrap();
        let mut g = p.clone();
        g.scale(100.0);
        let before = clip_global_norm(&mut g, 1.0);
        assert!(before > 1.0);
        assert!((g.squared_norm().sqrt() - 1.0).abs() < 1e-12);
        let mut small = p.zeros_like();
        assert_eq!(clip_global_norm(&mut small, 1.0), 0.0);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p = init_params::<f64>(&cfg(), 1).unwrap();
        let before = p.clone();
        let mut g = p.clone();
        let mut opt = AdamW::new(&p, TrainConfig { learning_rate: 0.0, ..TrainConfig::desk() });
        opt.step(&mut p, &mut g);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_each_entry_by_about_lr() {
        // With bias correction the first Adam step is lr * sign(g) (up to eps),
        // plus decay on weights.
        let mut p = init_params::<f64>(&cfg(), 1).unwrap().zeros_like();
        let mut g = p.zeros_like();
        g.slice_mut(0)[0] = 0.5;
        g.slice_mut(0)[1] = -0.25;
        let mut opt = AdamW::new(&p, TrainConfig { learning_rate: 0.01, ..TrainConfig::desk() });
        opt.step(&mut p, &mut g);
        assert!((p.slice_mut(0)[0] + 0.01).abs() < 1e-8);
        assert!((p.slice_mut(0)[1] - 0.01).abs() < 1e-8);
        assert_eq!(p.slice_mut(0)[2], 0.0);
    }
}
