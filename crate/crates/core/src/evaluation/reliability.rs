use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    /// `None` for empty bins.
    pub mean_score: Option<f64>,
    pub frac_pos: Option<f64>,
    pub count: usize,
}

fn edge(k: usize, bins: usize) -> f64 {
    k as f64 / bins as f64
}

/// Bin of score `p`: `[k/B, (k+1)/B)`, with the last bin closed on the right.
/// The product `p * B` can round across an edge, so the guess is corrected
/// against the edges themselves.
pub fn bin_of(p: f64, bins: usize) -> usize {
    let mut k = ((p * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    if k + 1 < bins && p >= edge(k + 1, bins) {
        k += 1;
    } else if k > 0 && p < edge(k, bins) {
        k -= 1;
    }
    k
}

/// Equal-width reliability bins on `[0, 1]`.
pub fn reliability(scores: &[f64], labels: &[u8], bins: usize) -> Result<Vec<ReliabilityBin>> {
    if bins == 0 {
        return Err(Error::Config("reliability needs at least one bin".into()));
    }
    if scores.is_empty() {
        return Err(Error::Config("reliability of an empty cohort".into()));
    }
    let mut sum = vec![0.0f64; bins];
    let mut pos = vec![0usize; bins];
    let mut count = vec![0usize; bins];
    for (&p, &y) in scores.iter().zip(labels) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidRecord(format!("score {p} outside [0, 1]")));
        }
        let k = bin_of(p, bins);
        sum[k] += p;
        pos[k] += y as usize;
        count[k] += 1;
    }
    Ok((0..bins)
        .map(|k| {
            let c = count[k];
            ReliabilityBin {
                lo: edge(k, bins),
                hi: edge(k + 1, bins),
                mean_score: (c > 0).then(|| sum[k] / c as f64),
                frac_pos: (c > 0).then(|| pos[k] as f64 / c as f64),
                count: c,
            }
        })
        .collect())
}
