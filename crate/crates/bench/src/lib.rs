//! Seeded inputs shared by the benchmarks in `benches/`.

use rand::Rng;

use crsnet_core::pipeline::{preprocess_patient, PreprocessConfig};
use crsnet_core::rng::seeded;
use crsnet_core::synth::{render_patient, sample_patients, SynthConfig};
use crsnet_core::{CtVolume, LesionMask, SliceStack};

/// One rendered synthetic patient at the default synthetic geometry.
pub fn patient(seed: u64) -> (CtVolume, LesionMask) {
    let cfg = SynthConfig {
        n_patients: 1,
        seed,
        split_fractions: [1.0, 0.0, 0.0, 0.0],
        ..SynthConfig::default()
    };
    let p = &sample_patients(&cfg).expect("valid synth config")[0];
    render_patient(&cfg, p)
}

/// A model-ready stack from [`patient`].
pub fn stack(seed: u64) -> SliceStack {
    let (ct, mask) = patient(seed);
    preprocess_patient(&ct, &mask, &PreprocessConfig::default())
        .expect("synthetic patient preprocesses")
        .stack
}

/// Scores with a mild class shift and ties, both classes present.
pub fn scored_cohort(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut r = seeded(seed);
    let labels: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
    let scores = labels
        .iter()
        .map(|&y| ((r.random::<f64>() + 0.5 * y as f64) / 1.5 * 1000.0).round() / 1000.0)
        .collect();
    (scores, labels)
}
