//! Discrimination, threshold and calibration analysis of scored cohorts.

mod ablation;
mod baseline;
mod bootstrap;
mod confusion;
mod reliability;
mod report;
mod roc;
mod threshold;

pub use ablation::{
    ablate, dataset, fit_fusion, standard_grid, AblationConfig, AblationKind, AblationRow, CohortPatient, FittedFusion,
    BASELINE_L2,
};
pub use baseline::LogisticBaseline;
pub use bootstrap::{bootstrap, bootstrap_metric, quantile, resample_indices, Metric, MetricSummary, DEFAULT_RESAMPLES};
pub use confusion::{confusion, prf_accuracy, Confusion, Prf};
pub use reliability::{bin_of, reliability, ReliabilityBin};
pub use report::{evaluate, write_ablation_csv, write_reports, EvalReport, EvalSettings, ABLATION_HEADER};
pub use roc::{auc, roc_auc, RocCurve, RocPoint};
pub use threshold::{
    candidate_thresholds, optimize_threshold, ThresholdChoice, ThresholdPolicy, DEFAULT_PRECISION_FLOOR, PUBLISHED_THRESHOLD,
};

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Per-patient scores and binary labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredCohort {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredCohort {
    pub fn new(ids: Vec<String>, scores: Vec<f64>, labels: Vec<u8>) -> Result<ScoredCohort> {
        if ids.len() != scores.len() || ids.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids, {} scores, {} labels",
                ids.len(),
                scores.len(),
                labels.len()
            )));
        }
        if let Some(i) = scores.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidRecord(format!("score {} of `{}` outside [0, 1]", scores[i], ids[i])));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidRecord(format!("label {} of `{}` is not binary", labels[i], ids[i])));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidRecord(format!("duplicate patient id `{dup}`")));
        }
        Ok(ScoredCohort { ids, scores, labels })
    }

    /// Cohort with generated ids, mostly for tests and benchmarks.
    pub fn anonymous(scores: Vec<f64>, labels: Vec<u8>) -> Result<ScoredCohort> {
        let ids = (0..scores.len()).map(|i| i.to_string()).collect();
        Self::new(ids, scores, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }
}
