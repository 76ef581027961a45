//! Clinical encoder and fusion head.
//!
//! ```text
//! z_clin = ReLU(A * standardize(c) + b)
//! x      = [z_img || z_clin]
//! hidden = dropout(ReLU(BN(W x + b)))      (per hidden layer)
//! p      = sigmoid(w_out . hidden + b_out)
//! ```
//!
//! The head is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for gradient verification.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{feature_vector, ClinicalFeature, ClinicalRecord};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tarc::{Tensor, TensorArchive};

pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + 'static
{
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Standard deviations below this are replaced by it.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinicalStats {
    pub features: Vec<ClinicalFeature>,
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec<f64>,
}

impl ClinicalStats {
    /// Fits per-feature mean and deviation on training records only.
    pub fn fit(train: &[&ClinicalRecord], features: &[ClinicalFeature]) -> Result<ClinicalStats> {
        if train.is_empty() {
            return Err(Error::EmptyTrainingSplit);
        }
        let n = train.len() as f64;
        let mut mean = vec![0.0; features.len()];
        let mut std = vec![0.0; features.len()];
        for (j, f) in features.iter().enumerate() {
            mean[j] = train.iter().map(|r| f.value(r)).sum::<f64>() / n;
            let var = train.iter().map(|r| (f.value(r) - mean[j]).powi(2)).sum::<f64>() / n;
            std[j] = var.sqrt().max(STD_FLOOR);
        }
        Ok(ClinicalStats {
            features: features.to_vec(),
            mean,
            std,
        })
    }

    pub fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn standardize_record(&self, rec: &ClinicalRecord) -> Vec<f64> {
        self.standardize(&feature_vector(rec, &self.features))
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub embed_dim: usize,
    pub clinical_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            embed_dim: 384,
            clinical_dim: 2,
            hidden: vec![128, 32],
            dropout: 0.25,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl HeadConfig {
    pub fn input_dim(&self) -> usize {
        self.embed_dim + self.clinical_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || !(0.0..1.0).contains(&self.dropout) || self.bn_eps <= 0.0 {
            return Err(Error::Config(format!("invalid head config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HiddenLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub bn_scale: Vec<T>,
    pub bn_bias: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T> {
    pub config: HeadConfig,
    /// `n x n`, row-major.
    pub clinical_weight: Vec<T>,
    pub clinical_bias: Vec<T>,
    pub hidden: Vec<HiddenLayer<T>>,
    pub out_weight: Vec<T>,
    pub out_bias: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Clinical representation `z_clin`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClinicalEmbedding(pub Vec<f64>);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub label: u8,
    pub threshold: f64,
}

/// `1` iff `p >= tau`.
pub fn decide(p: f64, tau: f64) -> u8 {
    (p >= tau) as u8
}

impl Prediction {
    pub fn new(probability: f64, threshold: f64) -> Prediction {
        Prediction {
            probability,
            label: decide(probability, threshold),
            threshold,
        }
    }
}

pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn relu<T: Real>(v: T) -> T {
    if v > T::zero() { v } else { T::zero() }
}

impl<T: Real> HeadParams<T> {
    /// PyTorch-style uniform(+-1/sqrt(fan_in)) linear init, unit BN scale,
    /// zero BN bias, unit running variance. The clinical map starts as the
    /// identity with bias 2 so the ReLU passes standardized values down to
    /// -2 unchanged.
    pub fn init(config: HeadConfig, rng: &mut StreamRng) -> Result<HeadParams<T>> {
        config.validate()?;
        let n = config.clinical_dim;
        let mut clinical_weight = vec![T::zero(); n * n];
        for i in 0..n {
            clinical_weight[i * n + i] = T::one();
        }
        let mut uniform = |len: usize, fan_in: usize| -> Vec<T> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..len).map(|_| T::c(rng.random_range(-bound..bound))).collect()
        };
        let mut hidden = Vec::new();
        let mut inputs = config.input_dim();
        for &outputs in &config.hidden {
            hidden.push(HiddenLayer {
                inputs,
                outputs,
                weight: uniform(outputs * inputs, inputs),
                bias: uniform(outputs, inputs),
                bn_scale: vec![T::one(); outputs],
                bn_bias: vec![T::zero(); outputs],
                running_mean: vec![T::zero(); outputs],
                running_var: vec![T::one(); outputs],
            });
            inputs = outputs;
        }
        Ok(HeadParams {
            clinical_weight,
            clinical_bias: vec![T::c(2.0); n],
            out_weight: uniform(inputs, inputs),
            out_bias: uniform(1, inputs),
            hidden,
            config,
        })
    }

    pub fn last_width(&self) -> usize {
        self.hidden.last().map_or(self.config.input_dim(), |l| l.outputs)
    }

    /// Names of the trainable tensors, in [`Self::trainable`] order.
    pub fn trainable_names(&self) -> Vec<String> {
        let mut names = vec!["clinical.weight".to_string(), "clinical.bias".to_string()];
        for i in 0..self.hidden.len() {
            names.push(format!("fc{i}.weight"));
            names.push(format!("fc{i}.bias"));
            names.push(format!("bn{i}.weight"));
            names.push(format!("bn{i}.bias"));
        }
        names.push("out.weight".into());
        names.push("out.bias".into());
        names
    }

    pub fn trainable(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = vec![&self.clinical_weight, &self.clinical_bias];
        for l in &self.hidden {
            v.extend([&l.weight[..], &l.bias[..], &l.bn_scale[..], &l.bn_bias[..]]);
        }
        v.push(&self.out_weight);
        v.push(&self.out_bias);
        v
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v = vec![&mut self.clinical_weight, &mut self.clinical_bias];
        for l in &mut self.hidden {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
            v.push(&mut l.bn_scale);
            v.push(&mut l.bn_bias);
        }
        v.push(&mut self.out_weight);
        v.push(&mut self.out_bias);
        v
    }

    pub fn cast<U: Real>(&self) -> HeadParams<U> {
        let cv = |v: &Vec<T>| v.iter().map(|x| U::c(x.f64())).collect::<Vec<U>>();
        HeadParams {
            config: self.config.clone(),
            clinical_weight: cv(&self.clinical_weight),
            clinical_bias: cv(&self.clinical_bias),
            hidden: self
                .hidden
                .iter()
                .map(|l| HiddenLayer {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weight: cv(&l.weight),
                    bias: cv(&l.bias),
                    bn_scale: cv(&l.bn_scale),
                    bn_bias: cv(&l.bn_bias),
                    running_mean: cv(&l.running_mean),
                    running_var: cv(&l.running_var),
                })
                .collect(),
            out_weight: cv(&self.out_weight),
            out_bias: cv(&self.out_bias),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        let names = self.trainable_names();
        for (name, t) in names.iter().zip(self.trainable()) {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteParameter(name.clone()));
            }
        }
        for (i, l) in self.hidden.iter().enumerate() {
            if l.running_var.iter().any(|v| !(v.is_finite() && *v > T::zero())) {
                return Err(Error::NonFiniteParameter(format!("bn{i}.running_var")));
            }
        }
        Ok(())
    }

    /// `z_clin = ReLU(A s + b)` for standardized clinical input `s`.
    pub fn encode_clinical(&self, standardized: &[T]) -> Vec<T> {
        let n = self.config.clinical_dim;
        (0..n)
            .map(|i| {
                let mut acc = self.clinical_bias[i];
                for j in 0..n {
                    acc += self.clinical_weight[i * n + j] * standardized[j];
                }
                relu(acc)
            })
            .collect()
    }
}

impl HeadParams<f32> {
    pub fn to_archive(&self) -> TensorArchive {
        let mut ar = TensorArchive::new();
        let n = self.config.clinical_dim;
        let v = |d: &[f32]| Tensor::vector(d.to_vec());
        ar.insert("clinical.weight", Tensor::new(vec![n, n], self.clinical_weight.clone()).unwrap());
        ar.insert("clinical.bias", v(&self.clinical_bias));
        for (i, l) in self.hidden.iter().enumerate() {
            ar.insert(format!("fc{i}.weight"), Tensor::new(vec![l.outputs, l.inputs], l.weight.clone()).unwrap());
            ar.insert(format!("fc{i}.bias"), v(&l.bias));
            ar.insert(format!("bn{i}.weight"), v(&l.bn_scale));
            ar.insert(format!("bn{i}.bias"), v(&l.bn_bias));
            ar.insert(format!("bn{i}.running_mean"), v(&l.running_mean));
            ar.insert(format!("bn{i}.running_var"), v(&l.running_var));
        }
        ar.insert("out.weight", Tensor::new(vec![1, self.last_width()], self.out_weight.clone()).unwrap());
        ar.insert("out.bias", v(&self.out_bias));
        ar
    }

    pub fn from_archive(ar: &TensorArchive, config: HeadConfig) -> Result<HeadParams<f32>> {
        config.validate()?;
        let n = config.clinical_dim;
        let get = |name: &str, dims: &[usize]| ar.expect(name, dims).map(|t| t.data.clone());
        let mut hidden = Vec::new();
        let mut inputs = config.input_dim();
        for (i, &outputs) in config.hidden.iter().enumerate() {
            hidden.push(HiddenLayer {
                inputs,
                outputs,
                weight: get(&format!("fc{i}.weight"), &[outputs, inputs])?,
                bias: get(&format!("fc{i}.bias"), &[outputs])?,
                bn_scale: get(&format!("bn{i}.weight"), &[outputs])?,
                bn_bias: get(&format!("bn{i}.bias"), &[outputs])?,
                running_mean: get(&format!("bn{i}.running_mean"), &[outputs])?,
                running_var: get(&format!("bn{i}.running_var"), &[outputs])?,
            });
            inputs = outputs;
        }
        let params = HeadParams {
            clinical_weight: get("clinical.weight", &[n, n])?,
            clinical_bias: get("clinical.bias", &[n])?,
            out_weight: get("out.weight", &[1, inputs])?,
            out_bias: get("out.bias", &[1])?,
            hidden,
            config,
        };
        params.check_finite()?;
        Ok(params)
    }
}

/// Intermediate values of one batch forward pass, kept for backprop.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub standardized: Vec<Vec<T>>,
    /// Clinical pre-activations `A s + b`.
    pub clinical_pre: Vec<Vec<T>>,
    /// Per layer: inputs, normalized pre-activations, post-BN values, dropout multipliers.
    pub layers: Vec<LayerCache<T>>,
    pub last: Vec<Vec<T>>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct LayerCache<T> {
    pub input: Vec<Vec<T>>,
    pub normalized: Vec<Vec<T>>,
    pub bn_out: Vec<Vec<T>>,
    pub drop: Vec<Vec<T>>,
    /// Batch mean / biased variance (train) or running stats (eval).
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Batch forward pass. In train mode batch-norm uses batch statistics and
/// dropout masks are drawn from `rng`; in eval mode running statistics are
/// used and dropout is disabled.
pub fn forward_batch<T: Real>(
    params: &HeadParams<T>,
    embeddings: &[&[f32]],
    standardized: &[Vec<T>],
    mode: Mode,
    mut rng: Option<&mut StreamRng>,
) -> Result<ForwardCache<T>> {
    let cfg = &params.config;
    let b = embeddings.len();
    if b == 0 || standardized.len() != b {
        return Err(Error::ShapeMismatch(format!("{} embeddings vs {} clinical rows", b, standardized.len())));
    }
    if mode == Mode::Train && b < 2 {
        return Err(Error::ShapeMismatch("batch-norm training needs a batch of at least 2".into()));
    }
    for e in embeddings {
        if e.len() != cfg.embed_dim {
            return Err(Error::ShapeMismatch(format!("embedding dim {} != {}", e.len(), cfg.embed_dim)));
        }
    }
    let n = cfg.clinical_dim;
    let mut clinical_pre = Vec::with_capacity(b);
    let mut x: Vec<Vec<T>> = Vec::with_capacity(b);
    for (e, s) in embeddings.iter().zip(standardized) {
        if s.len() != n {
            return Err(Error::ShapeMismatch(format!("clinical dim {} != {n}", s.len())));
        }
        let pre: Vec<T> = (0..n)
            .map(|i| {
                let mut acc = params.clinical_bias[i];
                for j in 0..n {
                    acc += params.clinical_weight[i * n + j] * s[j];
                }
                acc
            })
            .collect();
        let mut row: Vec<T> = e.iter().map(|&v| T::c(v as f64)).collect();
        row.extend(pre.iter().map(|&v| relu(v)));
        clinical_pre.push(pre);
        x.push(row);
    }

    let eps = T::c(cfg.bn_eps);
    let keep = 1.0 - cfg.dropout;
    let scale = T::c(1.0 / keep);
    let mut layers = Vec::with_capacity(params.hidden.len());
    for layer in &params.hidden {
        let u: Vec<Vec<T>> = x
            .iter()
            .map(|xi| {
                (0..layer.outputs)
                    .map(|o| {
                        let w = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                        w.iter().zip(xi).fold(layer.bias[o], |acc, (&wv, &xv)| acc + wv * xv)
                    })
                    .collect()
            })
            .collect();
        let (mean, var) = match mode {
            Mode::Train => {
                let bt = T::c(b as f64);
                let mean: Vec<T> = (0..layer.outputs).map(|o| u.iter().map(|r| r[o]).sum::<T>() / bt).collect();
                let var: Vec<T> = (0..layer.outputs)
                    .map(|o| u.iter().map(|r| (r[o] - mean[o]) * (r[o] - mean[o])).sum::<T>() / bt)
                    .collect();
                (mean, var)
            }
            Mode::Eval => (layer.running_mean.clone(), layer.running_var.clone()),
        };
        let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut normalized = Vec::with_capacity(b);
        let mut bn_out = Vec::with_capacity(b);
        let mut drop = Vec::with_capacity(b);
        let mut next = Vec::with_capacity(b);
        for ui in &u {
            let nh: Vec<T> = (0..layer.outputs).map(|o| (ui[o] - mean[o]) * inv[o]).collect();
            let bo: Vec<T> = (0..layer.outputs).map(|o| layer.bn_scale[o] * nh[o] + layer.bn_bias[o]).collect();
            let dm: Vec<T> = match (mode, rng.as_deref_mut()) {
                (Mode::Train, Some(r)) if cfg.dropout > 0.0 => (0..layer.outputs)
                    .map(|_| if r.random_bool(keep) { scale } else { T::zero() })
                    .collect(),
                _ => vec![T::one(); layer.outputs],
            };
            next.push((0..layer.outputs).map(|o| relu(bo[o]) * dm[o]).collect());
            normalized.push(nh);
            bn_out.push(bo);
            drop.push(dm);
        }
        layers.push(LayerCache {
            input: std::mem::replace(&mut x, next),
            normalized,
            bn_out,
            drop,
            mean,
            var,
        });
    }

    let logits: Vec<T> = x
        .iter()
        .map(|xi| xi.iter().zip(&params.out_weight).fold(params.out_bias[0], |acc, (&a, &w)| acc + a * w))
        .collect();
    if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
        return Err(Error::NonFinite(format!("head logit for batch element {i}")));
    }
    let probs = logits.iter().map(|&z| sigmoid(z)).collect();
    Ok(ForwardCache {
        standardized: standardized.to_vec(),
        clinical_pre,
        layers,
        last: x,
        logits,
        probs,
    })
}

/// Applies the running-statistics update of one train-mode batch.
pub fn update_running_stats<T: Real>(params: &mut HeadParams<T>, cache: &ForwardCache<T>) {
    let m = T::c(params.config.bn_momentum);
    let b = cache.probs.len() as f64;
    let unbias = T::c(b / (b - 1.0));
    for (layer, lc) in params.hidden.iter_mut().zip(&cache.layers) {
        for o in 0..layer.outputs {
            layer.running_mean[o] = (T::one() - m) * layer.running_mean[o] + m * lc.mean[o];
            layer.running_var[o] = (T::one() - m) * layer.running_var[o] + m * lc.var[o] * unbias;
        }
    }
}

/// Eval-mode probability for one patient.
pub fn fuse_and_score<T: Real>(embedding: &[f32], clinical_standardized: &[T], params: &HeadParams<T>) -> Result<T> {
    let cache = forward_batch(params, &[embedding], &[clinical_standardized.to_vec()], Mode::Eval, None)?;
    Ok(cache.probs[0])
}

/// Standardizes, encodes and scores a record in eval mode.
pub fn score_record(embedding: &[f32], record: &ClinicalRecord, stats: &ClinicalStats, params: &HeadParams<f32>) -> Result<f64> {
    let s: Vec<f32> = stats.standardize_record(record).into_iter().map(|v| v as f32).collect();
    Ok(fuse_and_score(embedding, &s, params)? as f64)
}

/// Clinical embedding of a record under fitted statistics.
pub fn encode_clinical(record: &ClinicalRecord, stats: &ClinicalStats, params: &HeadParams<f64>) -> ClinicalEmbedding {
    ClinicalEmbedding(params.encode_clinical(&stats.standardize_record(record)))
}
