use std::path::PathBuf;

use crsnet_core::evaluation::{ablate, standard_grid, write_ablation_csv, AblationConfig, AblationRow};

use super::create_dir;
use super::train::cohort_patients;
use crate::config::RunConfig;
use crate::exit::ConfigError;

pub const ABLATION_FILE: &str = "ablation.csv";

#[derive(Clone, Debug)]
pub struct AblateOutcome {
    pub path: PathBuf,
    pub rows: Vec<AblationRow>,
}

fn grid(cfg: &RunConfig) -> anyhow::Result<Vec<AblationConfig>> {
    let full = standard_grid();
    if cfg.eval.ablation.is_empty() {
        return Ok(full);
    }
    cfg.eval
        .ablation
        .iter()
        .map(|name| {
            full.iter().find(|c| &c.name == name || c.name.starts_with(&format!("{name} "))).cloned().ok_or_else(|| {
                let known: Vec<&str> = full.iter().map(|c| c.name.as_str()).collect();
                ConfigError(format!("unknown ablation row `{name}` (known: {})", known.join(", "))).into()
            })
        })
        .collect()
}

/// Retrains the head for each feature configuration and fits the clinical
/// baseline, reporting test and external AUC with bootstrap intervals.
pub fn cmd_ablate(cfg: &RunConfig) -> anyhow::Result<AblateOutcome> {
    let grid = grid(cfg)?;
    let (patients, _) = cohort_patients(cfg)?;
    let head = cfg.model.head(cfg.encoder.dim, cfg.train.dropout);
    let rows = ablate(&patients, &grid, &head, &cfg.train, cfg.eval.resamples, cfg.seed)?;
    let dir = cfg.run_dir().join(format!("eval-{}", cfg.eval_hash()));
    create_dir(&dir)?;
    let path = dir.join(ABLATION_FILE);
    write_ablation_csv(&path, &rows, &cfg.provenance())?;
    Ok(AblateOutcome { path, rows })
}
