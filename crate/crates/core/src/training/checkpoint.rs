//! Head checkpoint: `head.tarc` plus a JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::fusion::{ClinicalStats, HeadConfig, HeadParams};
use crate::tarc::TensorArchive;

pub const CHECKPOINT_TARC: &str = "head.tarc";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub head: HeadConfig,
    pub clinical_stats: ClinicalStats,
    pub train: TrainConfig,
    pub best_epoch: usize,
    pub class_weights: (f64, f64),
    /// Checksum of the frozen encoder the embeddings came from.
    pub encoder_checksum: String,
    /// Checksum of `head.tarc`, verified on load.
    pub head_checksum: String,
    pub threshold_policy: String,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: HeadParams<f32>,
    pub manifest: CheckpointManifest,
}

impl Checkpoint {
    /// Fills in `head_checksum` from `params`.
    pub fn new(params: HeadParams<f32>, mut manifest: CheckpointManifest) -> Checkpoint {
        manifest.head_checksum = params.to_archive().checksum();
        Checkpoint { params, manifest }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.params.to_archive().write(dir.join(CHECKPOINT_TARC))?;
        let json = dir.join(CHECKPOINT_JSON);
        let mut text = serde_json::to_vec_pretty(&self.manifest)?;
        text.push(b'\n');
        fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }

    pub fn load(dir: &Path) -> Result<Checkpoint> {
        let json = dir.join(CHECKPOINT_JSON);
        let text = fs::read(&json).map_err(|e| Error::io(&json, e))?;
        let manifest: CheckpointManifest = serde_json::from_slice(&text)?;
        let archive = TensorArchive::read(dir.join(CHECKPOINT_TARC))?;
        if archive.checksum() != manifest.head_checksum {
            return Err(Error::MalformedArchive(format!(
                "{} does not match the checksum recorded in {CHECKPOINT_JSON}",
                CHECKPOINT_TARC
            )));
        }
        let params = HeadParams::from_archive(&archive, manifest.head.clone())?;
        Ok(Checkpoint { params, manifest })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{ClinicalRecord, Crs, Split, DEFAULT_FEATURES};
    use crate::rng;

    #[test]
    fn save_load_round_trip_and_tamper_detection() {
        let head = HeadConfig {
            embed_dim: 4,
            hidden: vec![3],
            ..HeadConfig::default()
        };
        let params = HeadParams::init(head.clone(), &mut rng::seeded(1)).unwrap();
        let a = ClinicalRecord::new("a", 50.0, 100.0, Crs::One, Split::Train).unwrap();
        let b = ClinicalRecord::new("b", 70.0, 300.0, Crs::Three, Split::Train).unwrap();
        let manifest = CheckpointManifest {
            head,
            clinical_stats: ClinicalStats::fit(&[&a, &b], &DEFAULT_FEATURES).unwrap(),
            train: TrainConfig::default(),
            best_epoch: 3,
            class_weights: (1.0, 1.0),
            encoder_checksum: "abc".into(),
            head_checksum: String::new(),
            threshold_policy: "max_f1".into(),
            threshold: 0.5,
        };
        let ck = Checkpoint::new(params, manifest);
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        assert_eq!(Checkpoint::load(dir.path()).unwrap(), ck);

        let mut other = ck.params.clone();
        other.out_bias[0] += 1.0;
        other.to_archive().write(dir.path().join(CHECKPOINT_TARC)).unwrap();
        assert!(matches!(Checkpoint::load(dir.path()), Err(Error::MalformedArchive(_))));
    }
}
