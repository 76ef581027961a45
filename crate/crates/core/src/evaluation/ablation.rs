//! Feature-configuration ablation: the fusion head with subsets of the
//! clinical variables, plus a clinical/morphology logistic baseline.

use super::baseline::LogisticBaseline;
use super::bootstrap::{bootstrap_metric, Metric, MetricSummary};
use crate::cohort::{ClinicalFeature, ClinicalRecord, Split};
use crate::error::Result;
use crate::fusion::{ClinicalStats, HeadConfig, HeadParams};
use crate::training::{self, Dataset, TrainConfig, TrainHistory};

/// L2 strength of the clinical baseline.
pub const BASELINE_L2: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationKind {
    /// Image embedding plus the listed clinical features.
    Fusion,
    /// Logistic model on the listed clinical features and lesion volume.
    ClinicalBaseline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    pub name: String,
    pub kind: AblationKind,
    pub features: Vec<ClinicalFeature>,
}

impl AblationConfig {
    pub fn uses_ct(&self) -> bool {
        self.kind == AblationKind::Fusion
    }

    pub fn uses_volume(&self) -> bool {
        self.kind == AblationKind::ClinicalBaseline
    }

    pub fn uses(&self, f: ClinicalFeature) -> bool {
        self.features.contains(&f)
    }
}

/// Baseline, CT only, CT + age, CT + CA-125, CT + both.
pub fn standard_grid() -> Vec<AblationConfig> {
    use ClinicalFeature::{Age, Ca125};
    let fusion = |name: &str, features: Vec<ClinicalFeature>| AblationConfig {
        name: name.into(),
        kind: AblationKind::Fusion,
        features,
    };
    vec![
        AblationConfig {
            name: "clinical-baseline (logistic)".into(),
            kind: AblationKind::ClinicalBaseline,
            features: vec![Age, Ca125],
        },
        fusion("ct", vec![]),
        fusion("ct+age", vec![Age]),
        fusion("ct+ca125", vec![Ca125]),
        fusion("ct+age+ca125", vec![Age, Ca125]),
    ]
}

/// Everything the models need about one patient.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortPatient {
    pub record: ClinicalRecord,
    pub embedding: Vec<f32>,
    pub lesion_volume_cm3: f64,
}

fn in_split(patients: &[CohortPatient], split: Split) -> Vec<&CohortPatient> {
    patients.iter().filter(|p| p.record.split == split).collect()
}

/// A trained fusion head with the statistics it was standardized with.
#[derive(Clone, Debug)]
pub struct FittedFusion {
    pub params: HeadParams<f32>,
    pub stats: ClinicalStats,
    pub history: TrainHistory,
    pub class_weights: (f64, f64),
}

pub fn dataset(patients: &[&CohortPatient], stats: &ClinicalStats) -> Dataset {
    let mut d = Dataset::default();
    for p in patients {
        d.push(
            p.record.patient_id.clone(),
            p.embedding.clone(),
            stats.standardize_record(&p.record),
            p.record.label(),
        );
    }
    d
}

impl FittedFusion {
    pub fn score(&self, patients: &[&CohortPatient]) -> Result<Vec<f64>> {
        training::predict(&self.params, &dataset(patients, &self.stats))
    }
}

/// Fits clinical statistics on the training split and trains the head,
/// early-stopping on the validation split.
pub fn fit_fusion(
    patients: &[CohortPatient],
    features: &[ClinicalFeature],
    head: &HeadConfig,
    cfg: &TrainConfig,
) -> Result<FittedFusion> {
    let train = in_split(patients, Split::Train);
    let val = in_split(patients, Split::Val);
    let records: Vec<&ClinicalRecord> = train.iter().map(|p| &p.record).collect();
    let stats = ClinicalStats::fit(&records, features)?;
    let head = HeadConfig {
        clinical_dim: features.len(),
        ..head.clone()
    };
    let out = training::train(&head, cfg, &dataset(&train, &stats), &dataset(&val, &stats))?;
    Ok(FittedFusion {
        params: out.params,
        stats,
        history: out.history,
        class_weights: out.class_weights,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub config: AblationConfig,
    /// `None` when the split is empty or has one class.
    pub test_auc: Option<MetricSummary>,
    pub external_auc: Option<MetricSummary>,
}

fn baseline_row(p: &CohortPatient, features: &[ClinicalFeature]) -> Vec<f64> {
    let mut v: Vec<f64> = features.iter().map(|f| f.value(&p.record)).collect();
    v.push(p.lesion_volume_cm3);
    v
}

/// Trains and evaluates every configuration on the same splits and seed.
pub fn ablate(
    patients: &[CohortPatient],
    grid: &[AblationConfig],
    head: &HeadConfig,
    cfg: &TrainConfig,
    resamples: usize,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    let test = in_split(patients, Split::Test);
    let external = in_split(patients, Split::External);
    let summarize = |group: &[&CohortPatient], scores: Vec<f64>| -> Option<MetricSummary> {
        let labels: Vec<u8> = group.iter().map(|p| p.record.label()).collect();
        bootstrap_metric(&scores, &labels, 0.5, Metric::Auc, resamples, seed).ok()
    };
    grid.iter()
        .map(|config| {
            let (test_scores, ext_scores) = match config.kind {
                AblationKind::Fusion => {
                    let fitted = fit_fusion(patients, &config.features, head, cfg)?;
                    (fitted.score(&test)?, fitted.score(&external)?)
                }
                AblationKind::ClinicalBaseline => {
                    let train = in_split(patients, Split::Train);
                    let x: Vec<Vec<f64>> = train.iter().map(|p| baseline_row(p, &config.features)).collect();
                    let y: Vec<u8> = train.iter().map(|p| p.record.label()).collect();
                    let m = LogisticBaseline::fit(&x, &y, BASELINE_L2)?;
                    let score = |g: &[&CohortPatient]| g.iter().map(|p| m.predict(&baseline_row(p, &config.features))).collect();
                    (score(&test), score(&external))
                }
            };
            Ok(AblationRow {
                config: config.clone(),
                test_auc: summarize(&test, test_scores),
                external_auc: summarize(&external, ext_scores),
            })
        })
        .collect()
}
