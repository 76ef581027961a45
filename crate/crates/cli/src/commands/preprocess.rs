use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crsnet_core::cohort::{Crs, ManifestEntry};
use crsnet_core::csvio;
use crsnet_core::morphology::{write_cohort_csv, MorphologyRecord};
use crsnet_core::pipeline::preprocess_patient;
use crsnet_core::tarc::sha256_hex;
use crsnet_core::volume::rvol;
use crsnet_core::{Error, SliceStack};

use super::{cache_dir, create_dir, manifest};
use crate::config::RunConfig;

pub const INDEX_FILE: &str = "preprocess.csv";
pub const MORPHOLOGY_FILE: &str = "morphology.csv";
const INDEX_HEADER: [&str; 6] = ["patient_id", "split", "status", "cache", "reason", "detail"];

/// Written next to each cached stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientMeta {
    pub patient_id: String,
    /// Over the volume bytes, the mask bytes and the preprocessing config.
    pub input_checksum: String,
    pub stack_checksum: String,
    pub morphology: MorphologyRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Ok { meta: PatientMeta, cache_hit: bool },
    Excluded { reason: &'static str, detail: String },
}

#[derive(Clone, Debug)]
pub struct PreprocessOutcome {
    pub patients: Vec<(ManifestEntry, Status)>,
    pub run_dir: PathBuf,
}

impl PreprocessOutcome {
    pub fn included(&self) -> usize {
        self.patients.iter().filter(|(_, s)| matches!(s, Status::Ok { .. })).count()
    }

    pub fn cache_hits(&self) -> usize {
        self.patients
            .iter()
            .filter(|(_, s)| matches!(s, Status::Ok { cache_hit: true, .. }))
            .count()
    }

    pub fn excluded(&self) -> Vec<(&str, &str)> {
        self.patients
            .iter()
            .filter_map(|(e, s)| match s {
                Status::Excluded { reason, .. } => Some((e.patient_id.as_str(), *reason)),
                Status::Ok { .. } => None,
            })
            .collect()
    }
}

/// Stable reason code for an excluded patient.
pub fn reason_code(e: &Error) -> &'static str {
    match e {
        Error::InsufficientLesionSlices { .. } => "insufficient_lesion_slices",
        Error::Io { .. } => "unreadable_file",
        Error::MalformedHeader(_) | Error::PayloadSizeMismatch { .. } | Error::DtypeMismatch { .. } | Error::NonFiniteValue { .. } => {
            "corrupt_volume"
        }
        Error::Alignment(_) | Error::ShapeMismatch(_) => "misaligned_mask",
        Error::InvalidRecord(_) => "invalid_record",
        // an empty mask has zero lesion slices
        Error::EmptyMask => "insufficient_lesion_slices",
        _ => "preprocessing_failed",
    }
}

pub(crate) fn stack_path(cache: &Path, id: &str) -> PathBuf {
    cache.join(format!("{id}.rvol"))
}

pub(crate) fn meta_path(cache: &Path, id: &str) -> PathBuf {
    cache.join(format!("{id}.meta.json"))
}

fn read(path: &Path) -> Result<Vec<u8>, Error> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn cached(cache: &Path, id: &str, input_checksum: &str) -> Option<PatientMeta> {
    let meta: PatientMeta = serde_json::from_slice(&fs::read(meta_path(cache, id)).ok()?).ok()?;
    if meta.input_checksum != input_checksum {
        return None;
    }
    let stack = fs::read(stack_path(cache, id)).ok()?;
    (sha256_hex(&stack) == meta.stack_checksum).then_some(meta)
}

fn process(cfg: &RunConfig, cache: &Path, entry: &ManifestEntry) -> Result<(PatientMeta, bool), Error> {
    entry.record()?;
    let vol_bytes = read(&entry.volume_path)?;
    let mask_bytes = read(&entry.mask_path)?;
    let mut h = Sha256::new();
    h.update(&vol_bytes);
    h.update(&mask_bytes);
    h.update(serde_json::to_vec(&cfg.preprocess)?);
    let input_checksum = hex::encode(h.finalize());
    if let Some(meta) = cached(cache, &entry.patient_id, &input_checksum) {
        return Ok((meta, true));
    }

    let ct = rvol::decode_f32(&vol_bytes)?;
    let mask = rvol::decode_u8(&mask_bytes)?;
    let out = preprocess_patient(&ct, &mask, &cfg.preprocess)?;
    let path = stack_path(cache, &entry.patient_id);
    out.stack.save(&path)?;
    let meta = PatientMeta {
        patient_id: entry.patient_id.clone(),
        input_checksum,
        stack_checksum: sha256_hex(&read(&path)?),
        morphology: out.morphology,
    };
    let mp = meta_path(cache, &entry.patient_id);
    let mut text = serde_json::to_vec_pretty(&meta)?;
    text.push(b'\n');
    fs::write(&mp, text).map_err(|e| Error::io(&mp, e))?;
    Ok((meta, false))
}

/// Runs the preprocessing chain for every manifest row, reusing cached
/// stacks whose inputs are unchanged. One failing patient is excluded with a
/// reason code and never aborts the cohort.
pub fn cmd_preprocess(cfg: &RunConfig) -> anyhow::Result<PreprocessOutcome> {
    let entries = manifest(cfg)?;
    let run_dir = cfg.run_dir();
    let cache = cache_dir(cfg);
    create_dir(&cache)?;

    let statuses: Vec<Status> = entries
        .par_iter()
        .map(|e| match process(cfg, &cache, e) {
            Ok((meta, cache_hit)) => Status::Ok { meta, cache_hit },
            Err(err) => {
                warn!("excluding {}: {err}", e.patient_id);
                Status::Excluded {
                    reason: reason_code(&err),
                    detail: err.to_string(),
                }
            }
        })
        .collect();
    let patients: Vec<(ManifestEntry, Status)> = entries.into_iter().zip(statuses).collect();

    let rows: Vec<Vec<String>> = patients
        .iter()
        .map(|(e, s)| {
            let (status, hit, reason, detail) = match s {
                Status::Ok { cache_hit, .. } => ("ok", if *cache_hit { "hit" } else { "miss" }, "", String::new()),
                Status::Excluded { reason, detail } => ("excluded", "", *reason, detail.clone()),
            };
            vec![
                e.patient_id.clone(),
                e.split.to_string(),
                status.into(),
                hit.into(),
                reason.into(),
                detail,
            ]
        })
        .collect();
    // the cache column varies between runs, so it is left out of the stamped
    // copy in the run directory and kept only in the cache
    csvio::write(&cache.join(INDEX_FILE), &cfg.provenance(), &INDEX_HEADER, &rows)?;
    let stable: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.remove(3);
            r
        })
        .collect();
    let stable_header: Vec<&str> = INDEX_HEADER.iter().copied().filter(|h| *h != "cache").collect();
    csvio::write(&run_dir.join(INDEX_FILE), &cfg.provenance(), &stable_header, &stable)?;

    let morph: Vec<(String, Crs, MorphologyRecord)> = patients
        .iter()
        .filter_map(|(e, s)| match s {
            Status::Ok { meta, .. } => Some((e.patient_id.clone(), Crs::from_grade(e.crs).ok()?, meta.morphology)),
            Status::Excluded { .. } => None,
        })
        .collect();
    write_cohort_csv(&run_dir.join(MORPHOLOGY_FILE), &morph, &cfg.provenance())?;

    let outcome = PreprocessOutcome { patients, run_dir };
    info!(
        "preprocessed {} patients ({} cache hits, {} excluded)",
        outcome.included(),
        outcome.cache_hits(),
        outcome.excluded().len()
    );
    Ok(outcome)
}

/// Loads a cached stack after checking it against its metadata.
pub(crate) fn load_stack(cache: &Path, meta: &PatientMeta) -> Result<SliceStack, Error> {
    let path = stack_path(cache, &meta.patient_id);
    if sha256_hex(&read(&path)?) != meta.stack_checksum {
        return Err(Error::MalformedArchive(format!("{} changed since preprocessing", path.display())));
    }
    SliceStack::load(&path)
}
