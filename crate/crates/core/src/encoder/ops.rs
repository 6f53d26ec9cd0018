//! Row-wise kernels shared by the forward and backward passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::EncoderError;
use crate::scalar::Real;

pub const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct NormCache<T> {
    /// Normalized input before scale and offset.
    pub xhat: Array2<T>,
    pub rstd: Array1<T>,
}

/// `y = scale * (x - mean) / sqrt(var + eps) + offset`, per row.
pub fn layer_norm<T: Real>(
    x: &Array2<T>,
    scale: ArrayView1<T>,
    offset: ArrayView1<T>,
) -> (Array2<T>, NormCache<T>) {
    let (rows, d) = x.dim();
    let inv_d = T::one() / T::lit(d as f64);
    let eps = T::lit(LAYER_NORM_EPS);
    let mut xhat = Array2::zeros((rows, d));
    let mut rstd = Array1::zeros(rows);
    let mut y = Array2::zeros((rows, d));
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let s = T::one() / (var + eps).sqrt();
        rstd[r] = s;
        for c in 0..d {
            let h = (row[c] - mean) * s;
            xhat[[r, c]] = h;
            y[[r, c]] = scale[c] * h + offset[c];
        }
    }
    (y, NormCache { xhat, rstd })
}

/// Returns the input gradient and accumulates scale/offset gradients.
pub fn layer_norm_backward<T: Real>(
    dy: &Array2<T>,
    cache: &NormCache<T>,
    scale: ArrayView1<T>,
    dscale: &mut [T],
    doffset: &mut [T],
) -> Array2<T> {
    let (rows, d) = dy.dim();
    let inv_d = T::one() / T::lit(d as f64);
    let mut dx = Array2::zeros((rows, d));
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let mut sum = T::zero();
        let mut sum_xhat = T::zero();
        for c in 0..d {
            let g = dy[[r, c]];
            let h = cache.xhat[[r, c]];
            dscale[c] += g * h;
            doffset[c] += g;
            dxhat[c] = g * scale[c];
            sum += dxhat[c];
            sum_xhat += dxhat[c] * h;
        }
        let s = cache.rstd[r];
        for c in 0..d {
            dx[[r, c]] = s * (dxhat[c] - inv_d * sum - cache.xhat[[r, c]] * inv_d * sum_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.044715;

/// Tanh approximation of GELU.
pub fn gelu<T: Real>(z: &Array2<T>) -> Array2<T> {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let c = T::lit(GELU_C);
    let half = T::lit(0.5);
    z.mapv(|x| half * x * (T::one() + (k * (x + c * x * x * x)).tanh()))
}

pub fn gelu_grad<T: Real>(z: &Array2<T>) -> Array2<T> {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let c = T::lit(GELU_C);
    let half = T::lit(0.5);
    let three_c = T::lit(3.0 * GELU_C);
    z.mapv(|x| {
        let t = (k * (x + c * x * x * x)).tanh();
        half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + three_c * x * x)
    })
}

/// Scaled dot-product attention weights `softmax(Q Kᵀ / sqrt(d_k))`.
///
/// `key_mask[j] == 0` marks key `j` as padding: its score is set to -inf
/// before the softmax, so it receives exactly zero weight.
pub fn attention_weights<T: Real>(
    queries: ArrayView2<T>,
    keys: ArrayView2<T>,
    key_mask: &[u8],
) -> Result<Array2<T>, EncoderError> {
    if queries.ncols() != keys.ncols() || keys.nrows() != key_mask.len() {
        return Err(EncoderError::Shape(format!(
            "attention: queries {:?}, keys {:?}, mask {}",
            queries.dim(),
            keys.dim(),
            key_mask.len()
        )));
    }
    if !key_mask.iter().any(|&m| m != 0) {
        return Err(EncoderError::AllMasked);
    }
    let scale = T::one() / T::lit(queries.ncols() as f64).sqrt();
    let mut scores = queries.dot(&keys.t());
    scores.mapv_inplace(|s| s * scale);
    for (j, &m) in key_mask.iter().enumerate() {
        if m == 0 {
            scores.column_mut(j).fill(T::neg_infinity());
        }
    }
    softmax_rows(&mut scores);
    Ok(scores)
}

/// In-place softmax of each row; `-inf` entries become 0.
pub fn softmax_rows<T: Real>(m: &mut Array2<T>) {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = T::one() / sum;
        row.mapv_inplace(|v| v * inv);
    }
}

/// Softmax of a single vector, stable for large logits.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `logsumexp(logits) - logits[target]`.
pub fn cross_entropy<T: Real>(logits: &[T], target: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = logits.iter().map(|&l| (l - max).exp()).sum();
    max + sum.ln() - logits[target]
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn singleton_attention_is_one() {
        let q = array![[0.3, -1.2]];
        let k = array![[2.0, 0.5]];
        let w = attention_weights(q.view(), k.view(), &[1]).unwrap();
        assert_eq!(w, array![[1.0]]);
    }

    #[test]
    fn zero_inputs_give_uniform_weights() {
        let q = Array2::<f64>::zeros((5, 4));
        let w = attention_weights(q.view(), q.view(), &[1; 5]).unwrap();
        for &x in w.iter() {
            assert!((x - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_keys_get_zero_weight() {
        let q = array![[1.0f64, 2.0], [0.5, -0.5], [3.0, 1.0]];
        let w = attention_weights(q.view(), q.view(), &[1, 0, 1]).unwrap();
        for r in 0..3 {
            assert_eq!(w[[r, 1]], 0.0);
            assert!((w.row(r).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_masked_is_an_error() {
        let q = array![[1.0, 2.0]];
        assert!(matches!(
            attention_weights(q.view(), q.view(), &[0]),
            Err(EncoderError::AllMasked)
        ));
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = array![[1.0f64, 2.0, 3.0, 4.0], [-5.0, 0.0, 5.0, 10.0]];
        let ones = Array1::ones(4);
        let zeros = Array1::zeros(4);
        let (y, _) = layer_norm(&x, ones.view(), zeros.view());
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            assert!((row.mapv(|v| v * v).sum() / 4.0 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        let z = array![[-3.0f64, -0.7, 0.0, 0.4, 2.5]];
        let g = gelu_grad(&z);
        let h = 1e-6;
        let num = (gelu(&z.mapv(|v| v + h)) - gelu(&z.mapv(|v| v - h))) / (2.0 * h);
        for (a, n) in g.iter().zip(num.iter()) {
            assert!((a - n).abs() < 1e-8);
        }
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let l = [0.0f64; 8];
        assert!((cross_entropy(&l, 3) - 8f64.ln()).abs() < 1e-15);
        let p = softmax(&l);
        assert!(p.iter().all(|&x| x == 0.125));
    }
}
