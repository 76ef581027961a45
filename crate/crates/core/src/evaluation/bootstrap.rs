use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use super::confusion::{confusion, prf_accuracy};
use super::roc::auc;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Auc,
    F1,
    Precision,
    Recall,
    Accuracy,
    /// Confusion cells as percentages of positives (TP, FN) or negatives
    /// (TN, FP).
    TpPct,
    TnPct,
    FpPct,
    FnPct,
}

impl Metric {
    pub const PERFORMANCE: [Metric; 5] = [Metric::Auc, Metric::F1, Metric::Precision, Metric::Recall, Metric::Accuracy];
    pub const CONFUSION: [Metric; 4] = [Metric::TpPct, Metric::TnPct, Metric::FpPct, Metric::FnPct];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::F1 => "f1",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::Accuracy => "accuracy",
            Metric::TpPct => "tp_pct",
            Metric::TnPct => "tn_pct",
            Metric::FpPct => "fp_pct",
            Metric::FnPct => "fn_pct",
        }
    }

    /// Value on a cohort at threshold `tau`, `None` when undefined.
    pub fn evaluate(self, scores: &[f64], labels: &[u8], tau: f64) -> Option<f64> {
        if self == Metric::Auc {
            return auc(scores, labels).ok();
        }
        let c = confusion(scores, labels, tau);
        let m = prf_accuracy(&c);
        match self {
            Metric::F1 => m.f1,
            Metric::Precision => m.precision,
            Metric::Recall => m.recall,
            Metric::Accuracy => m.accuracy,
            Metric::TpPct => c.tp_pct(),
            Metric::TnPct => c.tn_pct(),
            Metric::FpPct => c.fp_pct(),
            Metric::FnPct => c.fn_pct(),
            Metric::Auc => unreachable!(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub metric: Metric,
    /// Value on the original cohort.
    pub point: Option<f64>,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Resamples on which the metric was defined.
    pub valid: usize,
    pub skipped: usize,
}

/// Type-7 (linear interpolation) quantile of ascending `sorted` data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_args(n: usize, resamples: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(format!("bootstrap needs a cohort of at least 2, got {n}")));
    }
    if resamples < 100 {
        return Err(Error::Config(format!("bootstrap needs at least 100 resamples, got {resamples}")));
    }
    Ok(())
}

/// Patient indices of resample `b`. Each resample owns its RNG stream, so
/// the draw does not depend on evaluation order.
pub fn resample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut r = rng::named_substream(seed, "bootstrap", b as u64);
    (0..n).map(|_| r.random_range(0..n)).collect()
}

/// Percentile bootstrap of `metric` with `resamples` patient-level draws.
/// The 95% interval is the 2.5th and 97.5th type-7 percentiles; undefined
/// resamples are skipped and counted.
pub fn bootstrap_metric(
    scores: &[f64],
    labels: &[u8],
    tau: f64,
    metric: Metric,
    resamples: usize,
    seed: u64,
) -> Result<MetricSummary> {
    Ok(bootstrap(scores, labels, tau, &[metric], resamples, seed)?.remove(0))
}

/// Bootstraps several metrics over the same resamples.
pub fn bootstrap(
    scores: &[f64],
    labels: &[u8],
    tau: f64,
    metrics: &[Metric],
    resamples: usize,
    seed: u64,
) -> Result<Vec<MetricSummary>> {
    let n = scores.len();
    check_args(n, resamples)?;
    let values: Vec<Vec<Option<f64>>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let idx = resample_indices(n, seed, b);
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            metrics.iter().map(|m| m.evaluate(&s, &y, tau)).collect()
        })
        .collect();
    metrics
        .iter()
        .enumerate()
        .map(|(k, &metric)| {
            let mut v: Vec<f64> = values.iter().filter_map(|row| row[k]).collect();
            if v.is_empty() {
                return Err(Error::AllResamplesUndefined(metric.name().into()));
            }
            v.sort_by(f64::total_cmp);
            Ok(MetricSummary {
                metric,
                point: metric.evaluate(scores, labels, tau),
                median: quantile(&v, 0.5),
                ci_low: quantile(&v, 0.025),
                ci_high: quantile(&v, 0.975),
                valid: v.len(),
                skipped: resamples - v.len(),
            })
        })
        .collect()
}
