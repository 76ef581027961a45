//! Subcommand implementations. Each takes a validated [`RunConfig`] and
//! returns a summary; printing is left to the binary.

mod ablate;
mod evaluate;
mod morphology;
mod preprocess;
mod synth;
mod train;

pub use ablate::{cmd_ablate, AblateOutcome, ABLATION_FILE};
pub use evaluate::{cmd_evaluate, EvalOutcome, SCORES_FILE};
pub use morphology::{cmd_morphology, MorphologyOutcome};
pub use preprocess::{cmd_preprocess, reason_code, PatientMeta, PreprocessOutcome, Status, INDEX_FILE, MORPHOLOGY_FILE};
pub use synth::{cmd_synth, SynthOutcome};
pub use train::{cmd_train, embeddings_path, ensure_embeddings, load_cohort, TrainOutcome, CHECKPOINT_DIR, HISTORY_FILE};

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crsnet_core::cohort::{read_manifest, ManifestEntry};

use crate::config::RunConfig;
use crate::exit::DataError;

pub const CACHE_DIR: &str = "cache";

pub fn cache_dir(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir().join(CACHE_DIR)
}

pub(crate) fn manifest(cfg: &RunConfig) -> anyhow::Result<Vec<ManifestEntry>> {
    let path = &cfg.paths.manifest;
    if !path.exists() {
        return Err(DataError(format!("manifest {} does not exist", path.display())).into());
    }
    read_manifest(path).with_context(|| format!("reading manifest {}", path.display()))
}

pub(crate) fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
