use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crsnet_core::cohort::{ManifestEntry, Split};
use crsnet_core::encoder::EncoderParams;
use crsnet_core::evaluation::{auc, fit_fusion, optimize_threshold, CohortPatient};
use crsnet_core::pipeline::encode_all;
use crsnet_core::tarc::{Tensor, TensorArchive};
use crsnet_core::training::{Checkpoint, CheckpointManifest, StopReason};
use crsnet_core::{csvio, Error};

use super::preprocess::{load_stack, meta_path, PatientMeta, INDEX_FILE};
use super::{cache_dir, create_dir, manifest};
use crate::config::RunConfig;
use crate::exit::DataError;

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const HISTORY_FILE: &str = "history.csv";

/// Included patients from a finished preprocessing run.
pub fn load_cohort(cfg: &RunConfig) -> anyhow::Result<Vec<(ManifestEntry, PatientMeta)>> {
    let index = cfg.run_dir().join(INDEX_FILE);
    if !index.exists() {
        return Err(DataError(format!(
            "no preprocessed cache at {}; run `crsnet preprocess` with this config first",
            cfg.run_dir().display()
        ))
        .into());
    }
    let mut reader = csvio::reader(&index)?;
    let mut ok = HashMap::new();
    for row in reader.records() {
        let row = row.context("reading preprocessing index")?;
        ok.insert(row[0].to_string(), &row[2] == "ok");
    }
    let cache = cache_dir(cfg);
    let mut out = Vec::new();
    for entry in manifest(cfg)? {
        match ok.get(&entry.patient_id) {
            Some(true) => {
                let path = meta_path(&cache, &entry.patient_id);
                let text = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                let meta: PatientMeta = serde_json::from_slice(&text)?;
                out.push((entry, meta));
            }
            Some(false) => {}
            None => {
                return Err(DataError(format!(
                    "{} is in the manifest but not in the preprocessing index; rerun `crsnet preprocess`",
                    entry.patient_id
                ))
                .into())
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize, PartialEq)]
struct EmbeddingIndex {
    encoder_checksum: String,
    /// `(patient_id, stack_checksum)` in archive order.
    stacks: Vec<(String, String)>,
}

fn load_encoder(cfg: &RunConfig) -> anyhow::Result<(EncoderParams, String)> {
    let path = &cfg.paths.encoder;
    if !path.exists() {
        return Err(DataError(format!(
            "encoder weights {} not found; `crsnet synth` writes seeded weights, scripts/convert_checkpoint.py converts real ones",
            path.display()
        ))
        .into());
    }
    let ar = TensorArchive::read(path)?;
    let checksum = ar.checksum();
    Ok((EncoderParams::from_archive(&ar, cfg.encoder)?, checksum))
}

pub fn embeddings_path(run_dir: &Path, encoder_checksum: &str) -> PathBuf {
    run_dir.join(format!("embeddings-{}.tarc", &encoder_checksum[..16]))
}

/// Embeddings of every included patient, computed once per encoder and
/// cached as `embeddings-<encoder checksum>.tarc`. Returns them together
/// with the encoder checksum.
pub fn ensure_embeddings(
    cfg: &RunConfig,
    cohort: &[(ManifestEntry, PatientMeta)],
) -> anyhow::Result<(HashMap<String, Vec<f32>>, String)> {
    let (encoder, checksum) = load_encoder(cfg)?;
    let path = embeddings_path(&cfg.run_dir(), &checksum);
    let index_path = path.with_extension("json");
    let wanted = EmbeddingIndex {
        encoder_checksum: checksum.clone(),
        stacks: cohort
            .iter()
            .map(|(e, m)| (e.patient_id.clone(), m.stack_checksum.clone()))
            .collect(),
    };
    let fresh = fs::read(&index_path)
        .ok()
        .and_then(|b| serde_json::from_slice::<EmbeddingIndex>(&b).ok())
        .is_some_and(|i| i == wanted);
    if fresh {
        if let Ok(ar) = TensorArchive::read(&path) {
            let map: Option<HashMap<_, _>> = wanted
                .stacks
                .iter()
                .map(|(id, _)| ar.get(id).map(|t| (id.clone(), t.data.clone())))
                .collect();
            if let Some(map) = map {
                info!("embedding cache hit ({})", path.display());
                return Ok((map, checksum));
            }
        }
    }

    info!("encoding {} stacks", cohort.len());
    let cache = cache_dir(cfg);
    let stacks = cohort
        .iter()
        .map(|(_, m)| load_stack(&cache, m))
        .collect::<Result<Vec<_>, Error>>()?;
    let refs: Vec<_> = stacks.iter().collect();
    let embeddings = encode_all(&refs, &encoder)?;
    let mut ar = TensorArchive::new();
    let mut map = HashMap::new();
    for ((e, _), emb) in cohort.iter().zip(embeddings) {
        ar.insert(e.patient_id.clone(), Tensor::vector(emb.0.clone()));
        map.insert(e.patient_id.clone(), emb.0);
    }
    ar.write(&path)?;
    fs::write(&index_path, serde_json::to_vec_pretty(&wanted)?).with_context(|| format!("writing {}", index_path.display()))?;
    Ok((map, checksum))
}

/// Threshold chosen by the configured policy on validation scores, named for
/// the report row. Falls back to 0.5 when the policy cannot be met.
pub(crate) fn policy_threshold(cfg: &RunConfig, scores: &[f64], labels: &[u8]) -> anyhow::Result<(String, f64)> {
    let policy = cfg.eval.policy()?;
    Ok(match optimize_threshold(scores, labels, policy) {
        Ok(choice) => (policy.to_string(), choice.tau),
        Err(e) => {
            warn!("{policy} on the validation split failed ({e}); using 0.5");
            (format!("{policy}:fallback"), 0.5)
        }
    })
}

pub(crate) fn cohort_patients(cfg: &RunConfig) -> anyhow::Result<(Vec<CohortPatient>, String)> {
    let cohort = load_cohort(cfg)?;
    let (emb, checksum) = ensure_embeddings(cfg, &cohort)?;
    let patients = cohort
        .into_iter()
        .map(|(e, m)| {
            Ok(CohortPatient {
                record: e.record()?,
                embedding: emb[&e.patient_id].clone(),
                lesion_volume_cm3: m.morphology.volume_cm3,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok((patients, checksum))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint_dir: PathBuf,
    pub best_epoch: usize,
    pub epochs: usize,
    pub stop_reason: StopReason,
    pub val_auc: Option<f64>,
    pub threshold_policy: String,
    pub threshold: f64,
    pub encoder_checksum: String,
    pub head_checksum: String,
}

pub fn cmd_train(cfg: &RunConfig) -> anyhow::Result<TrainOutcome> {
    let (patients, encoder_checksum) = cohort_patients(cfg)?;
    let head = cfg.model.head(cfg.encoder.dim, cfg.train.dropout);
    let fitted = fit_fusion(&patients, &cfg.model.features, &head, &cfg.train).context("training the fusion head")?;

    let val: Vec<&CohortPatient> = patients.iter().filter(|p| p.record.split == Split::Val).collect();
    let val_scores = fitted.score(&val)?;
    let val_labels: Vec<u8> = val.iter().map(|p| p.record.label()).collect();
    let (threshold_policy, threshold) = policy_threshold(cfg, &val_scores, &val_labels)?;

    let dir = cfg.run_dir();
    create_dir(&dir)?;
    fitted
        .history
        .write_csv(&dir.join(HISTORY_FILE), &cfg.provenance())
        .context("writing training history")?;
    let manifest = CheckpointManifest {
        head: fitted.params.config.clone(),
        clinical_stats: fitted.stats.clone(),
        train: cfg.train.clone(),
        best_epoch: fitted.history.best_epoch,
        class_weights: fitted.class_weights,
        encoder_checksum: encoder_checksum.clone(),
        head_checksum: String::new(),
        threshold_policy: threshold_policy.clone(),
        threshold,
    };
    let ck = Checkpoint::new(fitted.params, manifest);
    let ck_dir = dir.join(CHECKPOINT_DIR);
    ck.save(&ck_dir)?;

    let h = &fitted.history;
    Ok(TrainOutcome {
        checkpoint_dir: ck_dir,
        best_epoch: h.best_epoch,
        epochs: h.epochs(),
        stop_reason: h.stop_reason,
        val_auc: h.val_auc[h.best_epoch].or_else(|| auc(&val_scores, &val_labels).ok()),
        threshold_policy,
        threshold,
        encoder_checksum,
        head_checksum: ck.manifest.head_checksum,
    })
}
