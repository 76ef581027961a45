use crate::error::{Error, Result};
use crate::fusion::Real;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Weighted binary cross-entropy of one prediction.
pub fn wbce_loss<T: Real>(p: T, y: u8, w_pos: T, w_neg: T) -> T {
    let lo = T::c(PROB_CLAMP);
    let p = p.max(lo).min(T::one() - lo);
    if y == 1 {
        -w_pos * p.ln()
    } else {
        -w_neg * (T::one() - p).ln()
    }
}

/// Mean WBCE over a batch.
pub fn wbce_mean<T: Real>(probs: &[T], labels: &[u8], w_pos: T, w_neg: T) -> T {
    let n = T::c(probs.len() as f64);
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| wbce_loss(p, y, w_pos, w_neg))
        .sum::<T>()
        / n
}

/// Inverse-frequency class weights `N / (2 N_c)`, returned as `(w_pos, w_neg)`.
pub fn class_weights(labels: &[u8]) -> Result<(f64, f64)> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass);
    }
    Ok((n / (2.0 * pos), n / (2.0 * neg)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn reference_points() {
        assert!((wbce_loss(0.5f64, 1, 1.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((wbce_loss(0.5f64, 0, 1.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((wbce_loss(0.9f64, 1, 2.0, 1.0) - 0.210_721).abs() < 1e-6);
        assert_eq!(wbce_loss(0.9f64, 1, 2.0, 1.0), -2.0 * 0.9f64.ln());
    }

    #[test]
    fn unit_weights_reduce_to_bce() {
        let mut r = rng::seeded(14);
        for _ in 0..1000 {
            let p: f64 = r.random_range(1e-6..1.0 - 1e-6);
            let y = r.random_range(0..2u8);
            let bce = -(y as f64 * p.ln() + (1.0 - y as f64) * (1.0 - p).ln());
            assert!((wbce_loss(p, y, 1.0, 1.0) - bce).abs() <= 1e-12);
        }
    }

    #[test]
    fn clamping_keeps_loss_finite_and_non_negative() {
        for p in [0.0f64, 1.0, 1e-300] {
            for y in [0, 1] {
                let l = wbce_loss(p, y, 1.0, 1.0);
                assert!(l.is_finite() && l >= 0.0);
            }
        }
    }

    #[test]
    fn class_weight_examples() {
        let balanced: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        assert_eq!(class_weights(&balanced).unwrap(), (1.0, 1.0));
        let mut skew = vec![1u8; 5];
        skew.extend(vec![0u8; 15]);
        let (wp, wn) = class_weights(&skew).unwrap();
        assert_eq!(wp, 2.0);
        assert!((wn - 0.666_667).abs() < 1e-6);
        assert!(matches!(class_weights(&[0, 0, 0]), Err(Error::SingleClass)));
    }
}
