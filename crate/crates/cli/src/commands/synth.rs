use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use log::info;

use crsnet_core::encoder::EncoderParams;
use crsnet_core::synth::{generate_cohort, SynthPatient};
use crsnet_core::tarc::sha256_hex;

use super::create_dir;
use crate::config::RunConfig;

#[derive(Clone, Debug)]
pub struct SynthOutcome {
    pub manifest: PathBuf,
    pub manifest_checksum: String,
    pub patients: Vec<SynthPatient>,
    /// Set when seeded encoder weights were written because none existed.
    pub encoder_written: Option<PathBuf>,
}

/// Writes a synthetic cohort next to `paths.manifest`, plus seeded encoder
/// weights at `paths.encoder` if that file does not exist yet.
pub fn cmd_synth(cfg: &RunConfig) -> anyhow::Result<SynthOutcome> {
    let target = &cfg.paths.manifest;
    let dir = target.parent().map(PathBuf::from).unwrap_or_default();
    create_dir(&dir)?;
    let prov = cfg.provenance();
    let cohort = generate_cohort(&cfg.synth, &dir, &prov)?;
    if &cohort.manifest != target {
        fs::rename(&cohort.manifest, target).with_context(|| format!("moving manifest to {}", target.display()))?;
    }
    let manifest_checksum = sha256_hex(&fs::read(target).with_context(|| format!("reading {}", target.display()))?);

    let encoder_written = if cfg.paths.encoder.exists() {
        info!("keeping existing encoder weights {}", cfg.paths.encoder.display());
        None
    } else {
        EncoderParams::seeded(cfg.encoder, cfg.seed).to_archive().write(&cfg.paths.encoder)?;
        Some(cfg.paths.encoder.clone())
    };
    Ok(SynthOutcome {
        manifest: target.clone(),
        manifest_checksum,
        patients: cohort.patients,
        encoder_written,
    })
}
