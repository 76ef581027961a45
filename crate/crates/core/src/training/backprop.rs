//! Analytic gradients of the mean WBCE loss with respect to every trainable
//! head tensor (train-mode batch-norm, fixed dropout masks).

use super::loss::{wbce_mean, PROB_CLAMP};
use crate::error::{Error, Result};
use crate::fusion::{forward_batch, ForwardCache, HeadParams, Mode, Real};
use crate::rng;

/// A training batch: embeddings, standardized clinical rows and labels.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a, T> {
    pub embeddings: &'a [&'a [f32]],
    pub clinical: &'a [Vec<T>],
    pub labels: &'a [u8],
}

#[derive(Clone, Debug)]
pub struct HeadGradients<T> {
    /// Aligned with [`HeadParams::trainable`].
    pub tensors: Vec<Vec<T>>,
    pub loss: T,
}

/// Train-mode forward pass with dropout masks drawn from `dropout_seed`.
pub fn train_forward<T: Real>(params: &HeadParams<T>, batch: &Batch<'_, T>, dropout_seed: u64) -> Result<ForwardCache<T>> {
    let mut r = rng::named_substream(dropout_seed, "dropout", 0);
    forward_batch(params, batch.embeddings, batch.clinical, Mode::Train, Some(&mut r))
}

/// Mean WBCE of a train-mode pass; the scalar differentiated by
/// [`head_gradients`].
pub fn batch_loss<T: Real>(params: &HeadParams<T>, batch: &Batch<'_, T>, weights: (T, T), dropout_seed: u64) -> Result<T> {
    let cache = train_forward(params, batch, dropout_seed)?;
    Ok(wbce_mean(&cache.probs, batch.labels, weights.0, weights.1))
}

/// Loss, gradients and the forward cache (for running-stat updates).
pub fn head_gradients<T: Real>(
    params: &HeadParams<T>,
    batch: &Batch<'_, T>,
    weights: (T, T),
    dropout_seed: u64,
) -> Result<(HeadGradients<T>, ForwardCache<T>)> {
    let cache = train_forward(params, batch, dropout_seed)?;
    let b = cache.probs.len();
    if batch.labels.len() != b {
        return Err(Error::ShapeMismatch(format!("{} labels for batch of {b}", batch.labels.len())));
    }
    let bt = T::c(b as f64);
    let (w_pos, w_neg) = weights;
    let lo = T::c(PROB_CLAMP);
    let hi = T::one() - lo;

    // d loss / d logit
    let dz: Vec<T> = cache
        .probs
        .iter()
        .zip(batch.labels)
        .map(|(&p, &y)| {
            if p < lo || p > hi {
                T::zero()
            } else if y == 1 {
                -w_pos * (T::one() - p) / bt
            } else {
                w_neg * p / bt
            }
        })
        .collect();

    let last_w = params.last_width();
    let mut g_out_w = vec![T::zero(); last_w];
    let mut g_out_b = vec![T::zero(); 1];
    let mut d_act: Vec<Vec<T>> = Vec::with_capacity(b);
    for (i, &d) in dz.iter().enumerate() {
        for j in 0..last_w {
            g_out_w[j] += d * cache.last[i][j];
        }
        g_out_b[0] += d;
        d_act.push(params.out_weight.iter().map(|&w| d * w).collect());
    }

    let mut layer_grads: Vec<[Vec<T>; 4]> = Vec::with_capacity(params.hidden.len());
    for (layer, lc) in params.hidden.iter().zip(&cache.layers).rev() {
        let (nin, nout) = (layer.inputs, layer.outputs);
        let mut g_scale = vec![T::zero(); nout];
        let mut g_shift = vec![T::zero(); nout];
        let mut d_nh: Vec<Vec<T>> = vec![vec![T::zero(); nout]; b];
        for s in 0..b {
            for o in 0..nout {
                let through = if lc.bn_out[s][o] > T::zero() { lc.drop[s][o] } else { T::zero() };
                let d_bo = d_act[s][o] * through;
                g_scale[o] += d_bo * lc.normalized[s][o];
                g_shift[o] += d_bo;
                d_nh[s][o] = d_bo * layer.bn_scale[o];
            }
        }
        let eps = T::c(params.config.bn_eps);
        let mut du: Vec<Vec<T>> = vec![vec![T::zero(); nout]; b];
        for o in 0..nout {
            let inv = T::one() / (lc.var[o] + eps).sqrt();
            let sum_d: T = (0..b).map(|s| d_nh[s][o]).sum();
            let sum_dn: T = (0..b).map(|s| d_nh[s][o] * lc.normalized[s][o]).sum();
            for s in 0..b {
                du[s][o] = inv / bt * (bt * d_nh[s][o] - sum_d - lc.normalized[s][o] * sum_dn);
            }
        }
        let mut g_w = vec![T::zero(); nout * nin];
        let mut g_b = vec![T::zero(); nout];
        let mut d_in: Vec<Vec<T>> = vec![vec![T::zero(); nin]; b];
        for s in 0..b {
            let x = &lc.input[s];
            for o in 0..nout {
                let d = du[s][o];
                g_b[o] += d;
                let row = &mut g_w[o * nin..(o + 1) * nin];
                let w = &layer.weight[o * nin..(o + 1) * nin];
                for i in 0..nin {
                    row[i] += d * x[i];
                    d_in[s][i] += w[i] * d;
                }
            }
        }
        layer_grads.push([g_w, g_b, g_scale, g_shift]);
        d_act = d_in;
    }
    layer_grads.reverse();

    let n = params.config.clinical_dim;
    let e = params.config.embed_dim;
    let mut g_cw = vec![T::zero(); n * n];
    let mut g_cb = vec![T::zero(); n];
    for s in 0..b {
        for i in 0..n {
            if cache.clinical_pre[s][i] > T::zero() {
                let d = d_act[s][e + i];
                g_cb[i] += d;
                for j in 0..n {
                    g_cw[i * n + j] += d * cache.standardized[s][j];
                }
            }
        }
    }

    let mut tensors = vec![g_cw, g_cb];
    for g in layer_grads {
        tensors.extend(g);
    }
    tensors.push(g_out_w);
    tensors.push(g_out_b);
    for (name, t) in params.trainable_names().iter().zip(&tensors) {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    let loss = wbce_mean(&cache.probs, batch.labels, w_pos, w_neg);
    Ok((HeadGradients { tensors, loss }, cache))
}
