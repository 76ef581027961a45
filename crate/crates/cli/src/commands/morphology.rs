use std::path::PathBuf;

use log::warn;
use rayon::prelude::*;

use crsnet_core::cohort::{Crs, ManifestEntry};
use crsnet_core::morphology::{measure, write_cohort_csv, Connectivity, MorphologyRecord};
use crsnet_core::volume::{align_mask, isotropic_geometry, read_mask, read_volume, resample_mask_to};
use crsnet_core::Error;

use super::manifest;
use super::preprocess::{reason_code, MORPHOLOGY_FILE};
use crate::config::RunConfig;

#[derive(Clone, Debug)]
pub struct MorphologyOutcome {
    pub path: PathBuf,
    pub rows: Vec<(String, Crs, MorphologyRecord)>,
    pub excluded: Vec<(String, &'static str)>,
}

fn one(cfg: &RunConfig, e: &ManifestEntry) -> Result<(Crs, MorphologyRecord), Error> {
    let crs = Crs::from_grade(e.crs)?;
    let ct = read_volume(&e.volume_path)?;
    let mask = align_mask(&read_mask(&e.mask_path)?, &ct)?;
    let iso = resample_mask_to(&mask, isotropic_geometry(&ct.geometry, cfg.preprocess.isotropic_mm))?;
    Ok((crs, measure(&iso, Connectivity::try_from(cfg.preprocess.connectivity)?)?))
}

/// Lesion morphology on the isotropic grid for every manifest row, without
/// building slice stacks.
pub fn cmd_morphology(cfg: &RunConfig) -> anyhow::Result<MorphologyOutcome> {
    let entries = manifest(cfg)?;
    let results: Vec<_> = entries.par_iter().map(|e| one(cfg, e)).collect();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok((crs, m)) => rows.push((e.patient_id.clone(), crs, m)),
            Err(err) => {
                warn!("excluding {}: {err}", e.patient_id);
                excluded.push((e.patient_id.clone(), reason_code(&err)));
            }
        }
    }
    let path = cfg.run_dir().join("morphology").join(MORPHOLOGY_FILE);
    write_cohort_csv(&path, &rows, &cfg.provenance())?;
    Ok(MorphologyOutcome { path, rows, excluded })
}
