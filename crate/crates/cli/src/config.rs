//! Run configuration: one TOML file, a mandatory seed, and a few command-line
//! overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crsnet_core::cohort::{ClinicalFeature, DEFAULT_FEATURES};
use crsnet_core::csvio::Provenance;
use crsnet_core::encoder::EncoderConfig;
use crsnet_core::evaluation::{ThresholdPolicy, DEFAULT_RESAMPLES};
use crsnet_core::pipeline::PreprocessConfig;
use crsnet_core::synth::SynthConfig;
use crsnet_core::tarc::sha256_hex;
use crsnet_core::training::TrainConfig;
use crsnet_core::{Error, HeadConfig};

use crate::exit::ConfigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub manifest: PathBuf,
    /// Frozen encoder weights (TARC).
    pub encoder: PathBuf,
    /// Root under which `run-<hash>` directories are created.
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub features: Vec<ClinicalFeature>,
    pub hidden: Vec<usize>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let h = HeadConfig::default();
        ModelConfig {
            features: DEFAULT_FEATURES.to_vec(),
            hidden: h.hidden,
            bn_momentum: h.bn_momentum,
            bn_eps: h.bn_eps,
        }
    }
}

impl ModelConfig {
    pub fn head(&self, embed_dim: usize, dropout: f64) -> HeadConfig {
        HeadConfig {
            embed_dim,
            clinical_dim: self.features.len(),
            hidden: self.hidden.clone(),
            dropout,
            bn_momentum: self.bn_momentum,
            bn_eps: self.bn_eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// `max_f1`, `precision_floor` or `precision_floor(q)`.
    pub policy: String,
    /// Replaces the policy threshold when set.
    pub threshold: Option<f64>,
    pub resamples: usize,
    pub bins: usize,
    /// Splits scored by `evaluate`; empty splits are skipped.
    pub cohorts: Vec<String>,
    /// Ablation rows by name; empty means the full grid.
    pub ablation: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            policy: "precision_floor(0.75)".into(),
            threshold: None,
            resamples: DEFAULT_RESAMPLES,
            bins: 10,
            cohorts: vec!["test".into(), "external".into()],
            ablation: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn policy(&self) -> crsnet_core::Result<ThresholdPolicy> {
        self.policy.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory; every seeded stage derives from it.
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub synth: SynthConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub policy: Option<String>,
    pub out: Option<PathBuf>,
    pub cohorts: Option<Vec<String>>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<RunConfig> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()).into())
    }

    /// Reads `path`, resolves relative paths against its directory, applies
    /// overrides and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> anyhow::Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.paths.manifest, &mut self.paths.encoder, &mut self.paths.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.threshold {
            self.eval.threshold = Some(t);
        }
        if let Some(p) = &o.policy {
            self.eval.policy = p.clone();
        }
        if let Some(out) = &o.out {
            self.paths.out = out.clone();
        }
        if let Some(c) = &o.cohorts {
            self.eval.cohorts = c.clone();
        }
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let wrap = |e: Error| -> anyhow::Error { ConfigError(e.to_string()).into() };
        self.preprocess.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.synth.validate().map_err(wrap)?;
        self.eval.policy().map_err(wrap)?;
        self.model.head(self.encoder.dim, self.train.dropout).validate().map_err(wrap)?;
        if self.preprocess.grid[0] != self.encoder.image_size || self.preprocess.grid[1] != self.encoder.image_size {
            return Err(ConfigError(format!(
                "preprocess grid {:?} does not match encoder input {}",
                self.preprocess.grid, self.encoder.image_size
            ))
            .into());
        }
        if let Some(t) = self.eval.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(ConfigError(format!("threshold {t} outside [0, 1]")).into());
            }
        }
        if self.eval.resamples < 100 || self.eval.bins == 0 {
            return Err(ConfigError("eval.resamples must be >= 100 and eval.bins >= 1".into()).into());
        }
        for c in &self.eval.cohorts {
            c.parse::<crsnet_core::Split>().map_err(wrap)?;
        }
        Ok(())
    }

    /// Hash of the settings that determine the cached stacks, embeddings and
    /// trained head. Paths are left out so the same run in another directory
    /// stamps identical files; the inputs themselves are covered by the
    /// per-patient and encoder checksums. Evaluation settings are hashed
    /// separately so changing the threshold reuses the same run.
    pub fn run_hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            seed: u64,
            preprocess: &'a PreprocessConfig,
            encoder_config: &'a EncoderConfig,
            model: &'a ModelConfig,
            train: &'a TrainConfig,
        }
        let key = Key {
            seed: self.seed,
            preprocess: &self.preprocess,
            encoder_config: &self.encoder,
            model: &self.model,
            train: &self.train,
        };
        short_hash(&key)
    }

    pub fn eval_hash(&self) -> String {
        short_hash(&self.eval)[..8].to_string()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.paths.out.join(format!("run-{}", self.run_hash()))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::new()
            .with("config", self.run_hash())
            .with("seed", self.seed)
            .with("version", env!("CARGO_PKG_VERSION"))
    }
}

fn short_hash<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("config serializes");
    sha256_hex(&bytes)[..16].to_string()
}
