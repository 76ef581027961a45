use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// With-replacement sampler drawing index `i` with probability proportional
/// to `1 / N_class(i)`, so both classes are equally represented in
/// expectation.
#[derive(Clone, Debug)]
pub struct WeightedSampler {
    dist: WeightedIndex<f64>,
    len: usize,
    batch_size: usize,
    rng: StreamRng,
}

impl WeightedSampler {
    pub fn new(labels: &[u8], batch_size: usize, seed: u64) -> Result<WeightedSampler> {
        let pos = labels.iter().filter(|&&y| y == 1).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::SingleClass);
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let weights = labels.iter().map(|&y| if y == 1 { 1.0 / pos as f64 } else { 1.0 / neg as f64 });
        Ok(WeightedSampler {
            dist: WeightedIndex::new(weights).expect("positive weights"),
            len: labels.len(),
            batch_size,
            rng: rng::named_substream(seed, "sampler", 0),
        })
    }

    /// Batches per epoch: `ceil(N / batch_size)`.
    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        (0..self.batch_size).map(|_| self.dist.sample(&mut self.rng)).collect()
    }

    /// `N` draws split into batches of `batch_size`; the last batch holds
    /// the remainder.
    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        (0..self.batches_per_epoch())
            .map(|b| {
                let size = self.batch_size.min(self.len - b * self.batch_size);
                (0..size).map(|_| self.dist.sample(&mut self.rng)).collect()
            })
            .collect()
    }
}

/// Per-index sampling probabilities implied by the class-balancing rule.
pub fn sampling_probabilities(labels: &[u8]) -> Result<Vec<f64>> {
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass);
    }
    Ok(labels
        .iter()
        .map(|&y| if y == 1 { 0.5 / pos } else { 0.5 / neg })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_labels_are_uniform() {
        let labels: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        assert!(sampling_probabilities(&labels).unwrap().iter().all(|&p| (p - 0.1).abs() < 1e-15));
    }

    #[test]
    fn rare_positive_is_drawn_half_the_time() {
        let mut labels = vec![0u8; 99];
        labels.push(1);
        let mut s = WeightedSampler::new(&labels, 50, 77).unwrap();
        let mut hits = 0;
        for _ in 0..200 {
            hits += s.next_batch().iter().filter(|&&i| i == 99).count();
        }
        let frac = hits as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "fraction {frac}");
    }

    #[test]
    fn epoch_shape_and_determinism() {
        let labels = [0u8, 1, 0, 0, 1, 0, 0];
        let mut a = WeightedSampler::new(&labels, 3, 5).unwrap();
        let mut b = WeightedSampler::new(&labels, 3, 5).unwrap();
        let ea = a.epoch();
        assert_eq!(ea.len(), 3);
        assert_eq!(ea.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 1]);
        assert_eq!(ea, b.epoch());
        assert!(matches!(WeightedSampler::new(&[1, 1], 2, 0), Err(Error::SingleClass)));
    }
}
