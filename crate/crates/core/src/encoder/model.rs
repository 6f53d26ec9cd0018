//! Encoder forward pass, analytic backward pass, classification head and
//! cross-entropy loss.
//!
//! Per block (post-norm, as in BERT):
//!
//! ```text
//! a  = dropout(MultiHead(x) Wo + bo)       y1 = norm(x + a)
//! f  = dropout(gelu(y1 W1 + b1) W2 + b2)   y2 = norm(y1 + f)
//! ```
//!
//! The input to the first block is `dropout(norm(token + position + segment))`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};

use super::ops::{self, NormCache};
use super::params::{LayerIndex, ParamIndex, Parameters};
use super::EncoderError;
use crate::corpus::{IsLabel, N_LABELS};
use crate::rng::{name_key, SeededRng};
use crate::scalar::Real;
use crate::vocab::EncodedInput;

/// Keys the dropout stream of one example at one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub step: u64,
    pub example: u64,
}

/// Keys the dropout streams of a whole batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepKey {
    pub seed: u64,
    pub step: u64,
}

impl StepKey {
    pub fn example(self, example: usize) -> DropoutKey {
        DropoutKey {
            seed: self.seed,
            step: self.step,
            example: example as u64,
        }
    }
}

/// Inverted-dropout multipliers (0 or 1/(1-rate)) for one activation site.
fn dropout_mask<T: Real>(key: Option<DropoutKey>, rate: f64, site: &str, rows: usize, cols: usize) -> Option<Array2<T>> {
    let key = key?;
    if rate == 0.0 {
        return None;
    }
    let mut rng = SeededRng::keyed(key.seed, &[key.step, key.example, name_key(site)]);
    let keep = T::lit(1.0 / (1.0 - rate));
    Some(Array2::from_shape_fn((rows, cols), |_| {
        if rng.uniform() < rate {
            T::zero()
        } else {
            keep
        }
    }))
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    x: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    context: Array2<T>,
    attn_drop: Option<Array2<T>>,
    norm1: NormCache<T>,
    y1: Array2<T>,
    z: Array2<T>,
    g: Array2<T>,
    ffn_drop: Option<Array2<T>>,
    norm2: NormCache<T>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    ids: Vec<u32>,
    segments: Vec<u8>,
    emb_norm: NormCache<T>,
    emb_drop: Option<Array2<T>>,
    layers: Vec<LayerCache<T>>,
}

fn check_inputs<T: Real>(ids: &[u32], mask: &[u8], segments: &[u8], params: &Parameters<T>) -> Result<(), EncoderError> {
    let cfg = params.config();
    let len = ids.len();
    if mask.len() != len || segments.len() != len {
        return Err(EncoderError::Shape(format!(
            "ids {len}, mask {}, segments {} differ in length",
            mask.len(),
            segments.len()
        )));
    }
    if len == 0 || len > cfg.max_len {
        return Err(EncoderError::Shape(format!("sequence length {len} outside 1..={}", cfg.max_len)));
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(EncoderError::Shape(format!("token id {id} >= vocab_size {}", cfg.vocab_size)));
    }
    if segments.iter().any(|&s| s > 1) {
        return Err(EncoderError::Shape("segment ids must be 0 or 1".into()));
    }
    Ok(())
}

/// Runs the encoder over one sequence and returns its hidden states
/// (`len × d_model`). Dropout is active only when `dropout` is given.
pub fn forward<T: Real>(
    ids: &[u32],
    mask: &[u8],
    segments: &[u8],
    params: &Parameters<T>,
    dropout: Option<DropoutKey>,
) -> Result<(Array2<T>, ForwardCache<T>), EncoderError> {
    check_inputs(ids, mask, segments, params)?;
    let cfg = *params.config();
    let len = ids.len();
    let d = cfg.d_model;
    let rate = cfg.dropout_rate;

    let tok = params.mat(ParamIndex::TOKEN);
    let pos = params.mat(ParamIndex::POSITION);
    let seg = params.mat(ParamIndex::SEGMENT);
    let mut emb = Array2::<T>::zeros((len, d));
    for i in 0..len {
        let mut row = emb.row_mut(i);
        row += &tok.row(ids[i] as usize);
        row += &pos.row(i);
        row += &seg.row(segments[i] as usize);
    }
    let (mut x, emb_norm) = ops::layer_norm(
        &emb,
        params.vec(ParamIndex::EMB_NORM_SCALE),
        params.vec(ParamIndex::EMB_NORM_OFFSET),
    );
    let emb_drop = dropout_mask::<T>(dropout, rate, "embeddings", len, d);
    if let Some(m) = &emb_drop {
        x *= m;
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let (y, cache) = block_forward(x, mask, params, l, dropout)?;
        layers.push(cache);
        x = y;
    }

    Ok((
        x,
        ForwardCache {
            ids: ids.to_vec(),
            segments: segments.to_vec(),
            emb_norm,
            emb_drop,
            layers,
        },
    ))
}

fn affine<T: Real>(x: &Array2<T>, params: &Parameters<T>, w: usize, b: usize) -> Array2<T> {
    let mut out = x.dot(&params.mat(w));
    out += &params.vec(b);
    out
}

fn block_forward<T: Real>(
    x: Array2<T>,
    mask: &[u8],
    params: &Parameters<T>,
    l: usize,
    dropout: Option<DropoutKey>,
) -> Result<(Array2<T>, LayerCache<T>), EncoderError> {
    let cfg = params.config();
    let li = ParamIndex::layer(l);
    let (len, d) = x.dim();
    let dk = cfg.head_dim();

    let q = affine(&x, params, li.query_w(), li.query_b());
    let k = affine(&x, params, li.key_w(), li.key_b());
    let v = affine(&x, params, li.value_w(), li.value_b());

    let mut context = Array2::<T>::zeros((len, d));
    let mut probs = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let p = ops::attention_weights(q.slice(cols), k.slice(cols), mask)?;
        context.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }

    let mut attn = affine(&context, params, li.output_w(), li.output_b());
    let attn_drop = dropout_mask::<T>(dropout, cfg.dropout_rate, &format!("layer{l}.attention"), len, d);
    if let Some(m) = &attn_drop {
        attn *= m;
    }
    attn += &x;
    let (y1, norm1) = ops::layer_norm(&attn, params.vec(li.attn_norm_scale()), params.vec(li.attn_norm_offset()));

    let z = affine(&y1, params, li.inner_w(), li.inner_b());
    let g = ops::gelu(&z);
    let mut f = affine(&g, params, li.outer_w(), li.outer_b());
    let ffn_drop = dropout_mask::<T>(dropout, cfg.dropout_rate, &format!("layer{l}.ffn"), len, d);
    if let Some(m) = &ffn_drop {
        f *= m;
    }
    f += &y1;
    let (y2, norm2) = ops::layer_norm(&f, params.vec(li.ffn_norm_scale()), params.vec(li.ffn_norm_offset()));

    Ok((
        y2,
        LayerCache {
            x,
            q,
            k,
            v,
            probs,
            context,
            attn_drop,
            norm1,
            y1,
            z,
            g,
            ffn_drop,
            norm2,
        },
    ))
}

/// `grads[w] += aᵀ b`
fn accumulate_outer<T: Real>(grads: &mut Parameters<T>, w: usize, a: &Array2<T>, b: &Array2<T>) {
    general_mat_mul(T::one(), &a.t(), b, T::one(), &mut grads.mat_mut(w));
}

fn accumulate_bias<T: Real>(grads: &mut Parameters<T>, b: usize, d: &Array2<T>) {
    let mut g = grads.vec_mut(b);
    g += &d.sum_axis(Axis(0));
}

/// Back-propagates `d_hidden` (gradient of the loss with respect to the
/// final hidden states) and accumulates parameter gradients into `grads`.
pub fn backward<T: Real>(
    d_hidden: Array2<T>,
    cache: &ForwardCache<T>,
    params: &Parameters<T>,
    grads: &mut Parameters<T>,
) {
    let mut dx = d_hidden;
    for l in (0..cache.layers.len()).rev() {
        dx = block_backward(dx, &cache.layers[l], params, ParamIndex::layer(l), grads);
    }

    if let Some(m) = &cache.emb_drop {
        dx *= m;
    }
    let mut dscale = vec![T::zero(); dx.ncols()];
    let mut doffset = vec![T::zero(); dx.ncols()];
    let demb = ops::layer_norm_backward(
        &dx,
        &cache.emb_norm,
        params.vec(ParamIndex::EMB_NORM_SCALE),
        &mut dscale,
        &mut doffset,
    );
    add_slice(grads.slice_mut(ParamIndex::EMB_NORM_SCALE), &dscale);
    add_slice(grads.slice_mut(ParamIndex::EMB_NORM_OFFSET), &doffset);

    for (i, row) in demb.rows().into_iter().enumerate() {
        let mut t = grads.mat_mut(ParamIndex::TOKEN);
        let mut r = t.row_mut(cache.ids[i] as usize);
        r += &row;
        let mut p = grads.mat_mut(ParamIndex::POSITION);
        let mut r = p.row_mut(i);
        r += &row;
        let mut s = grads.mat_mut(ParamIndex::SEGMENT);
        let mut r = s.row_mut(cache.segments[i] as usize);
        r += &row;
    }
}

fn add_slice<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
}

fn block_backward<T: Real>(
    dy2: Array2<T>,
    c: &LayerCache<T>,
    params: &Parameters<T>,
    li: LayerIndex,
    grads: &mut Parameters<T>,
) -> Array2<T> {
    let cfg = *params.config();
    let d = cfg.d_model;
    let dk = cfg.head_dim();
    let mut dscale = vec![T::zero(); d];
    let mut doffset = vec![T::zero(); d];

    // Feed-forward sub-block.
    let dr2 = ops::layer_norm_backward(&dy2, &c.norm2, params.vec(li.ffn_norm_scale()), &mut dscale, &mut doffset);
    add_slice(grads.slice_mut(li.ffn_norm_scale()), &dscale);
    add_slice(grads.slice_mut(li.ffn_norm_offset()), &doffset);
    let mut df = dr2.clone();
    if let Some(m) = &c.ffn_drop {
        df *= m;
    }
    accumulate_outer(grads, li.outer_w(), &c.g, &df);
    accumulate_bias(grads, li.outer_b(), &df);
    let dg = df.dot(&params.mat(li.outer_w()).t());
    let dz = dg * ops::gelu_grad(&c.z);
    accumulate_outer(grads, li.inner_w(), &c.y1, &dz);
    accumulate_bias(grads, li.inner_b(), &dz);
    let mut dy1 = dr2;
    general_mat_mul(T::one(), &dz, &params.mat(li.inner_w()).t(), T::one(), &mut dy1);

    // Attention sub-block.
    dscale.iter_mut().for_each(|x| *x = T::zero());
    doffset.iter_mut().for_each(|x| *x = T::zero());
    let dr1 = ops::layer_norm_backward(&dy1, &c.norm1, params.vec(li.attn_norm_scale()), &mut dscale, &mut doffset);
    add_slice(grads.slice_mut(li.attn_norm_scale()), &dscale);
    add_slice(grads.slice_mut(li.attn_norm_offset()), &doffset);
    let mut da = dr1.clone();
    if let Some(m) = &c.attn_drop {
        da *= m;
    }
    accumulate_outer(grads, li.output_w(), &c.context, &da);
    accumulate_bias(grads, li.output_b(), &da);
    let dcontext = da.dot(&params.mat(li.output_w()).t());

    let scale = T::one() / T::lit(dk as f64).sqrt();
    let (len, _) = c.x.dim();
    let mut dq = Array2::<T>::zeros((len, d));
    let mut dk_all = Array2::<T>::zeros((len, d));
    let mut dv = Array2::<T>::zeros((len, d));
    for (h, p) in c.probs.iter().enumerate() {
        let cols = s![.., h * dk..(h + 1) * dk];
        let dctx = dcontext.slice(cols);
        let dp = dctx.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&dctx));
        // Softmax backward: dS = P * (dP - rowsum(dP * P)).
        let mut ds = dp;
        for (mut ds_row, p_row) in ds.rows_mut().into_iter().zip(p.rows()) {
            let dot: T = ds_row.iter().zip(p_row.iter()).map(|(&a, &b)| a * b).sum();
            ds_row.zip_mut_with(&p_row, |g, &pv| *g = pv * (*g - dot) * scale);
        }
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dk_all.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }

    let mut dx = dr1;
    for (dproj, w, b) in [
        (&dq, li.query_w(), li.query_b()),
        (&dk_all, li.key_w(), li.key_b()),
        (&dv, li.value_w(), li.value_b()),
    ] {
        accumulate_outer(grads, w, &c.x, dproj);
        accumulate_bias(grads, b, dproj);
        general_mat_mul(T::one(), dproj, &params.mat(w).t(), T::one(), &mut dx);
    }
    dx
}

/// Classifier logits for the hidden state at `row`.
pub fn logits<T: Real>(hidden: &Array2<T>, row: usize, params: &Parameters<T>) -> [T; N_LABELS] {
    let n = params.config().n_layers;
    let h = hidden.row(row);
    let z = h.dot(&params.mat(ParamIndex::classifier_w(n))) + params.vec(ParamIndex::classifier_b(n));
    let mut out = [T::zero(); N_LABELS];
    out.iter_mut().zip(z.iter()).for_each(|(o, &v)| *o = v);
    out
}

/// Class probabilities read off the `[IS]` position.
pub fn classify<T: Real>(
    hidden: &Array2<T>,
    is_index: usize,
    mask: &[u8],
    params: &Parameters<T>,
) -> Result<[T; N_LABELS], EncoderError> {
    if is_index >= hidden.nrows() || mask.get(is_index).copied().unwrap_or(0) == 0 {
        return Err(EncoderError::IsIndexMasked(is_index));
    }
    let p = ops::softmax(&logits(hidden, is_index, params));
    let mut out = [T::zero(); N_LABELS];
    out.copy_from_slice(&p);
    Ok(out)
}

/// Index of the largest probability; ties go to the lowest class index.
pub fn argmax<T: Real>(probs: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Token ids, attention mask and segment ids without trailing padding.
pub(crate) type TrimmedInput<'a> = (&'a [u32], &'a [u8], &'a [u8]);

/// One encoded training or evaluation item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: EncodedInput,
    pub label: Option<IsLabel>,
}

impl Example {
    /// Inputs with trailing padding removed.
    pub(crate) fn trimmed(&self) -> Result<TrimmedInput<'_>, EncoderError> {
        let len = self.input.effective_len();
        if self.input.is_index >= len || self.input.attention_mask[self.input.is_index] == 0 {
            return Err(EncoderError::IsIndexMasked(self.input.is_index));
        }
        Ok((
            &self.input.ids[..len],
            &self.input.attention_mask[..len],
            &self.input.segment_ids[..len],
        ))
    }
}

/// Probabilities for one example in inference mode.
pub fn predict_probs<T: Real>(example: &Example, params: &Parameters<T>) -> Result<[T; N_LABELS], EncoderError> {
    let (ids, mask, segs) = example.trimmed()?;
    let (hidden, _) = forward(ids, mask, segs, params, None)?;
    classify(&hidden, example.input.is_index, mask, params)
}

/// Mean cross-entropy over the batch, without gradients.
pub fn batch_loss<T: Real>(batch: &[Example], params: &Parameters<T>, dropout: Option<StepKey>) -> Result<T, EncoderError> {
    run_batch(batch, params, dropout, false).map(|(l, _)| l)
}

/// Mean cross-entropy over the batch and its gradient with respect to every
/// parameter tensor.
pub fn loss_and_gradients<T: Real>(
    batch: &[Example],
    params: &Parameters<T>,
    dropout: Option<StepKey>,
) -> Result<(T, Parameters<T>), EncoderError> {
    run_batch(batch, params, dropout, true).map(|(l, g)| (l, g.expect("gradients requested")))
}

fn run_batch<T: Real>(
    batch: &[Example],
    params: &Parameters<T>,
    dropout: Option<StepKey>,
    want_grads: bool,
) -> Result<(T, Option<Parameters<T>>), EncoderError> {
    if batch.is_empty() {
        return Err(EncoderError::EmptyBatch);
    }
    let n_layers = params.config().n_layers;
    let inv_b = T::one() / T::lit(batch.len() as f64);
    let mut grads = want_grads.then(|| params.zeros_like());
    let mut total = T::zero();

    for (j, ex) in batch.iter().enumerate() {
        let label = ex.label.ok_or(EncoderError::Unlabeled(j))?;
        let (ids, mask, segs) = ex.trimmed()?;
        let key = dropout.map(|k| k.example(j));
        let (hidden, cache) = forward(ids, mask, segs, params, key)?;
        let is = ex.input.is_index;
        let z = logits(&hidden, is, params);
        total += ops::cross_entropy(&z, label.index());

        if let Some(g) = grads.as_mut() {
            let mut dlogits = ops::softmax(&z);
            dlogits[label.index()] -= T::one();
            dlogits.iter_mut().for_each(|x| *x *= inv_b);

            let cw = ParamIndex::classifier_w(n_layers);
            let cb = ParamIndex::classifier_b(n_layers);
            let h = hidden.row(is);
            {
                let mut gw = g.mat_mut(cw);
                for (r, &hv) in h.iter().enumerate() {
                    for (c, &dl) in dlogits.iter().enumerate() {
                        gw[[r, c]] += hv * dl;
                    }
                }
            }
            add_slice(g.slice_mut(cb), &dlogits);

            let w = params.mat(cw);
            let mut d_hidden = Array2::<T>::zeros(hidden.dim());
            for (r, dh) in d_hidden.row_mut(is).iter_mut().enumerate() {
                *dh = w.row(r).iter().zip(&dlogits).map(|(&a, &b)| a * b).sum();
            }
            backward(d_hidden, &cache, params, g);
        }
    }
    Ok((total * inv_b, grads))
}
