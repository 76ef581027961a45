use std::path::PathBuf;

use anyhow::Context;

use crsnet_core::cohort::Split;
use crsnet_core::csvio;
use crsnet_core::evaluation::{dataset, evaluate, write_reports, CohortPatient, EvalReport, EvalSettings, ScoredCohort};
use crsnet_core::training::{predict, Checkpoint};

use super::train::{cohort_patients, policy_threshold, CHECKPOINT_DIR};
use super::create_dir;
use crate::config::RunConfig;
use crate::exit::DataError;

pub const SCORES_FILE: &str = "scores.csv";

#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub dir: PathBuf,
    pub reports: Vec<EvalReport>,
    /// Name and value of the non-default threshold row.
    pub policy_row: (String, f64),
}

impl EvalOutcome {
    pub fn has_undefined(&self) -> bool {
        self.reports.iter().any(EvalReport::has_undefined)
    }

    /// Cohorts whose AUC is undefined because they hold a single class.
    pub fn single_class_cohorts(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.reports.iter().filter(|r| r.roc.is_none()).map(|r| r.cohort.as_str()).collect();
        out.dedup();
        out
    }

    pub fn report(&self, cohort: &str, threshold_name: &str) -> Option<&EvalReport> {
        self.reports
            .iter()
            .find(|r| r.cohort == cohort && r.threshold_name == threshold_name)
    }
}

/// Scores the configured splits with the trained head and reports every
/// metric at tau = 0.5 and at the policy (or overridden) threshold.
pub fn cmd_evaluate(cfg: &RunConfig) -> anyhow::Result<EvalOutcome> {
    let ck_dir = cfg.run_dir().join(CHECKPOINT_DIR);
    if !ck_dir.exists() {
        return Err(DataError(format!("no checkpoint at {}; run `crsnet train` first", ck_dir.display())).into());
    }
    let ck = Checkpoint::load(&ck_dir).context("loading checkpoint")?;
    let (patients, encoder_checksum) = cohort_patients(cfg)?;
    if encoder_checksum != ck.manifest.encoder_checksum {
        return Err(DataError(format!(
            "encoder weights changed since training (checkpoint {}, now {})",
            &ck.manifest.encoder_checksum[..16],
            &encoder_checksum[..16]
        ))
        .into());
    }
    let score = |split: Split| -> anyhow::Result<(Vec<&CohortPatient>, Vec<f64>)> {
        let group: Vec<&CohortPatient> = patients.iter().filter(|p| p.record.split == split).collect();
        let scores = predict(&ck.params, &dataset(&group, &ck.manifest.clinical_stats))?;
        Ok((group, scores))
    };

    let policy_row = match cfg.eval.threshold {
        Some(t) => (format!("tau_{t}"), t),
        None => {
            let (val, scores) = score(Split::Val)?;
            let labels: Vec<u8> = val.iter().map(|p| p.record.label()).collect();
            policy_threshold(cfg, &scores, &labels)?
        }
    };

    let settings = EvalSettings {
        resamples: cfg.eval.resamples,
        bins: cfg.eval.bins,
        seed: cfg.seed,
    };
    let mut reports = Vec::new();
    let mut score_rows = Vec::new();
    for name in &cfg.eval.cohorts {
        let split: Split = name.parse()?;
        let (group, scores) = score(split)?;
        if group.is_empty() {
            continue;
        }
        let ids: Vec<String> = group.iter().map(|p| p.record.patient_id.clone()).collect();
        let labels: Vec<u8> = group.iter().map(|p| p.record.label()).collect();
        for ((id, s), y) in ids.iter().zip(&scores).zip(&labels) {
            score_rows.push(vec![id.clone(), split.to_string(), y.to_string(), csvio::num(*s)]);
        }
        let cohort = ScoredCohort::new(ids, scores, labels)?;
        reports.push(evaluate(name, &cohort, "tau_0.5", 0.5, &settings)?);
        if policy_row.1 != 0.5 || policy_row.0 != "tau_0.5" {
            reports.push(evaluate(name, &cohort, &policy_row.0, policy_row.1, &settings)?);
        }
    }
    if reports.is_empty() {
        return Err(DataError(format!("none of the cohorts {:?} has any patients", cfg.eval.cohorts)).into());
    }

    let dir = cfg.run_dir().join(format!("eval-{}", cfg.eval_hash()));
    create_dir(&dir)?;
    let prov = cfg
        .provenance()
        .with("policy", &policy_row.0)
        .with("threshold", csvio::num(policy_row.1))
        .with("head", &ck.manifest.head_checksum);
    write_reports(&dir, &reports, &prov)?;
    csvio::write(&dir.join(SCORES_FILE), &prov, &["patient_id", "split", "label", "score"], &score_rows)?;
    Ok(EvalOutcome { dir, reports, policy_row })
}
