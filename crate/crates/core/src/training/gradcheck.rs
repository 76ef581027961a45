//! Central finite-difference checks of [`head_gradients`].

use rand::seq::index;

use super::backprop::{batch_loss, head_gradients, Batch};
use crate::error::Result;
use crate::fusion::{HeadParams, Real};
use crate::rng;

/// Outcome for one trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    /// Entries that were perturbed.
    pub checked: usize,
    /// Euclidean norms over the checked entries.
    pub diff_norm: f64,
    pub grad_norm: f64,
    pub fd_norm: f64,
    pub max_abs_error: f64,
}

impl TensorCheck {
    /// `|g - g_fd| / max(|g| + |g_fd|, floor)`. The floor keeps tensors whose
    /// true gradient is zero (a bias feeding batch-norm) from dividing
    /// rounding noise by rounding noise.
    pub fn rel_error(&self, floor: f64) -> f64 {
        self.diff_norm / (self.grad_norm + self.fd_norm).max(floor)
    }
}

/// The same ratio over the concatenation of all checked entries.
pub fn global_relative_error(checks: &[TensorCheck]) -> f64 {
    let sq = |f: fn(&TensorCheck) -> f64| checks.iter().map(|c| f(c).powi(2)).sum::<f64>().sqrt();
    let diff = sq(|c| c.diff_norm);
    let denom = sq(|c| c.grad_norm) + sq(|c| c.fd_norm);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Perturbs up to `max_entries` seeded coordinates of every trainable tensor
/// by `±h` and compares the central difference of the batch loss with the
/// analytic gradient. Norms are over the checked coordinates.
pub fn finite_difference_check<T: Real>(
    params: &HeadParams<T>,
    batch: &Batch<'_, T>,
    weights: (T, T),
    dropout_seed: u64,
    h: f64,
    max_entries: usize,
    sample_seed: u64,
) -> Result<Vec<TensorCheck>> {
    let (grads, _) = head_gradients(params, batch, weights, dropout_seed)?;
    let names = params.trainable_names();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(names.len());
    for (t, name) in names.iter().enumerate() {
        let len = grads.tensors[t].len();
        let picks: Vec<usize> = if len <= max_entries {
            (0..len).collect()
        } else {
            let mut r = rng::named_substream(sample_seed, "gradcheck", t as u64);
            let mut v = index::sample(&mut r, len, max_entries).into_vec();
            v.sort_unstable();
            v
        };
        let (mut diff2, mut a2, mut f2, mut max_abs) = (0.0, 0.0, 0.0, 0.0f64);
        for &i in &picks {
            let orig = probe.trainable_mut()[t][i];
            probe.trainable_mut()[t][i] = orig + T::c(h);
            let up = batch_loss(&probe, batch, weights, dropout_seed)?.f64();
            probe.trainable_mut()[t][i] = orig - T::c(h);
            let down = batch_loss(&probe, batch, weights, dropout_seed)?.f64();
            probe.trainable_mut()[t][i] = orig;
            // the perturbation actually applied after rounding to T
            let step = (orig + T::c(h)).f64() - (orig - T::c(h)).f64();
            let fd = (up - down) / step;
            let g = grads.tensors[t][i].f64();
            diff2 += (g - fd).powi(2);
            a2 += g * g;
            f2 += fd * fd;
            max_abs = max_abs.max((g - fd).abs());
        }
        out.push(TensorCheck {
            name: name.clone(),
            checked: picks.len(),
            diff_norm: diff2.sqrt(),
            grad_norm: a2.sqrt(),
            fd_norm: f2.sqrt(),
            max_abs_error: max_abs,
        });
    }
    Ok(out)
}
