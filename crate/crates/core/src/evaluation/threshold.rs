use std::fmt;
use std::str::FromStr;

use super::confusion::{confusion, prf_accuracy, Confusion};
use crate::error::{Error, Result};

/// Operating threshold published for the internal cohort, used when
/// reproducing reports at a fixed transfer threshold.
pub const PUBLISHED_THRESHOLD: f64 = 0.69;

/// Precision target used when `precision_floor` is given without a value.
pub const DEFAULT_PRECISION_FLOOR: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdPolicy {
    /// Maximise F1; ties go to the larger threshold.
    MaxF1,
    /// Smallest threshold with precision `>= q` and at least one TP.
    PrecisionFloor(f64),
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::MaxF1 => f.write_str("max_f1"),
            ThresholdPolicy::PrecisionFloor(q) => write!(f, "precision_floor({q})"),
        }
    }
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    /// Accepts `max_f1`, `precision_floor`, `precision_floor(0.8)` and
    /// `precision_floor:0.8`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "max_f1" {
            return Ok(ThresholdPolicy::MaxF1);
        }
        let Some(rest) = s.strip_prefix("precision_floor") else {
            return Err(Error::Config(format!("unknown threshold policy `{s}`")));
        };
        let q = match rest.trim() {
            "" => DEFAULT_PRECISION_FLOOR,
            r => {
                let inner = r
                    .strip_prefix(':')
                    .or_else(|| r.strip_prefix('(').and_then(|x| x.strip_suffix(')')))
                    .ok_or_else(|| Error::Config(format!("malformed policy `{s}`")))?;
                inner
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("malformed precision target in `{s}`")))?
            }
        };
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::Config(format!("precision target {q} outside (0, 1]")));
        }
        Ok(ThresholdPolicy::PrecisionFloor(q))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdChoice {
    pub tau: f64,
    pub confusion: Confusion,
}

/// `{0, 1}` plus midpoints between adjacent distinct scores, ascending.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let mut c = vec![0.0];
    c.extend(s.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    c.push(1.0);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

pub fn optimize_threshold(scores: &[f64], labels: &[u8], policy: ThresholdPolicy) -> Result<ThresholdChoice> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let cands = candidate_thresholds(scores);
    match policy {
        ThresholdPolicy::MaxF1 => {
            // F1 = 2TP / (2TP + FP + FN), compared as exact fractions
            let mut best: Option<(usize, usize, ThresholdChoice)> = None;
            for &tau in &cands {
                let c = confusion(scores, labels, tau);
                let (num, den) = (2 * c.tp, 2 * c.tp + c.fp + c.fn_);
                let better = match &best {
                    None => true,
                    Some((bn, bd, _)) => num * bd >= bn * den,
                };
                if better {
                    best = Some((num, den, ThresholdChoice { tau, confusion: c }));
                }
            }
            Ok(best.expect("candidates are never empty").2)
        }
        ThresholdPolicy::PrecisionFloor(q) => cands
            .iter()
            .map(|&tau| ThresholdChoice {
                tau,
                confusion: confusion(scores, labels, tau),
            })
            .find(|ch| ch.confusion.tp >= 1 && prf_accuracy(&ch.confusion).precision.is_some_and(|p| p >= q))
            .ok_or(Error::PrecisionFloorUnattainable(q)),
    }
}
