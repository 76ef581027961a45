//! Frozen ViT-S/16 forward pass producing the CLS embedding of a slice stack.
//!
//! Pre-norm blocks: `x += proj(attn(LN(x)))`, `x += fc2(gelu(fc1(LN(x))))`,
//! followed by a final LayerNorm. Weights come from a TARC archive and are
//! never modified after loading.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;
use crate::sliceselect::{SliceStack, STACK_DEPTH};
use crate::tarc::{Tensor, TensorArchive};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    /// Extra learned tokens placed after CLS; zero for plain checkpoints.
    pub register_tokens: usize,
    pub layer_norm_eps: f32,
    /// Per-channel standardization applied to `[0, 1]` inputs.
    pub input_mean: f32,
    pub input_std: f32,
}

impl EncoderConfig {
    pub fn vit_small() -> Self {
        EncoderConfig {
            image_size: 224,
            patch_size: 16,
            dim: 384,
            depth: 12,
            heads: 6,
            mlp_hidden: 1536,
            register_tokens: 0,
            layer_norm_eps: 1e-6,
            input_mean: 0.5,
            input_std: 0.25,
        }
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        STACK_DEPTH * self.patch_size * self.patch_size
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    fn validate(&self) -> Result<()> {
        if self.image_size % self.patch_size != 0 || self.dim % self.heads != 0 || self.depth == 0 {
            return Err(Error::Config(format!("inconsistent encoder config {self:?}")));
        }
        Ok(())
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::vit_small()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `out x in`.
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

impl Linear {
    fn forward(&self, x: ArrayView2<f32>) -> Array2<f32> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    fn zeros(out: usize, inp: usize) -> Linear {
        Linear {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub weight: Array1<f32>,
    pub bias: Array1<f32>,
}

impl LayerNorm {
    fn identity(dim: usize) -> LayerNorm {
        LayerNorm {
            weight: Array1::ones(dim),
            bias: Array1::zeros(dim),
        }
    }

    fn forward(&self, x: ArrayView2<f32>, eps: f32) -> Array2<f32> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            let n = row.len() as f32;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for ((v, w), b) in row.iter_mut().zip(&self.weight).zip(&self.bias) {
                *v = (*v - mean) * inv * w + b;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub norm1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// `dim x (3 * patch * patch)`; input order is (channel, row, col).
    pub patch_embed: Linear,
    pub cls_token: Array1<f32>,
    pub register_tokens: Array2<f32>,
    /// `(1 + patches) x dim`; registers carry no positional embedding.
    pub pos_embed: Array2<f32>,
    pub blocks: Vec<BlockParams>,
    pub norm: LayerNorm,
}

/// The CLS-token representation of one input.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(pub Vec<f32>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

fn to_tensor2(a: &Array2<f32>) -> Tensor {
    Tensor {
        dims: a.shape().to_vec(),
        data: a.iter().copied().collect(),
    }
}

fn to_tensor1(a: &Array1<f32>) -> Tensor {
    Tensor::vector(a.to_vec())
}

fn load2(ar: &TensorArchive, name: &str, r: usize, c: usize) -> Result<Array2<f32>> {
    let t = ar.expect(name, &[r, c])?;
    Ok(Array2::from_shape_vec((r, c), t.data.clone()).expect("shape checked"))
}

fn load1(ar: &TensorArchive, name: &str, n: usize) -> Result<Array1<f32>> {
    Ok(Array1::from(ar.expect(name, &[n])?.data.clone()))
}

fn load_linear(ar: &TensorArchive, prefix: &str, out: usize, inp: usize) -> Result<Linear> {
    Ok(Linear {
        weight: load2(ar, &format!("{prefix}.weight"), out, inp)?,
        bias: load1(ar, &format!("{prefix}.bias"), out)?,
    })
}

fn load_norm(ar: &TensorArchive, prefix: &str, dim: usize) -> Result<LayerNorm> {
    Ok(LayerNorm {
        weight: load1(ar, &format!("{prefix}.weight"), dim)?,
        bias: load1(ar, &format!("{prefix}.bias"), dim)?,
    })
}

impl EncoderParams {
    /// Reads every expected tensor, checking names, shapes and finiteness.
    pub fn from_archive(ar: &TensorArchive, config: EncoderConfig) -> Result<EncoderParams> {
        config.validate()?;
        let d = config.dim;
        let blocks = (0..config.depth)
            .map(|i| {
                let p = format!("blocks.{i}");
                Ok(BlockParams {
                    norm1: load_norm(ar, &format!("{p}.norm1"), d)?,
                    qkv: load_linear(ar, &format!("{p}.attn.qkv"), 3 * d, d)?,
                    proj: load_linear(ar, &format!("{p}.attn.proj"), d, d)?,
                    norm2: load_norm(ar, &format!("{p}.norm2"), d)?,
                    fc1: load_linear(ar, &format!("{p}.mlp.fc1"), config.mlp_hidden, d)?,
                    fc2: load_linear(ar, &format!("{p}.mlp.fc2"), d, config.mlp_hidden)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let register_tokens = if config.register_tokens > 0 {
            load2(ar, "register_tokens", config.register_tokens, d)?
        } else {
            Array2::zeros((0, d))
        };
        Ok(EncoderParams {
            patch_embed: load_linear(ar, "patch_embed", d, config.patch_dim())?,
            cls_token: load1(ar, "cls_token", d)?,
            register_tokens,
            pos_embed: load2(ar, "pos_embed", 1 + config.num_patches(), d)?,
            blocks,
            norm: load_norm(ar, "norm", d)?,
            config,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>, config: EncoderConfig) -> Result<EncoderParams> {
        Self::from_archive(&TensorArchive::read(path)?, config)
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut ar = TensorArchive::new();
        ar.insert("patch_embed.weight", to_tensor2(&self.patch_embed.weight));
        ar.insert("patch_embed.bias", to_tensor1(&self.patch_embed.bias));
        ar.insert("cls_token", to_tensor1(&self.cls_token));
        if self.config.register_tokens > 0 {
            ar.insert("register_tokens", to_tensor2(&self.register_tokens));
        }
        ar.insert("pos_embed", to_tensor2(&self.pos_embed));
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            for (name, ln) in [("norm1", &b.norm1), ("norm2", &b.norm2)] {
                ar.insert(format!("{p}.{name}.weight"), to_tensor1(&ln.weight));
                ar.insert(format!("{p}.{name}.bias"), to_tensor1(&ln.bias));
            }
            for (name, lin) in [("attn.qkv", &b.qkv), ("attn.proj", &b.proj), ("mlp.fc1", &b.fc1), ("mlp.fc2", &b.fc2)] {
                ar.insert(format!("{p}.{name}.weight"), to_tensor2(&lin.weight));
                ar.insert(format!("{p}.{name}.bias"), to_tensor1(&lin.bias));
            }
        }
        ar.insert("norm.weight", to_tensor1(&self.norm.weight));
        ar.insert("norm.bias", to_tensor1(&self.norm.bias));
        ar
    }

    pub fn checksum(&self) -> String {
        self.to_archive().checksum()
    }

    /// All-zero linear maps with identity LayerNorms.
    pub fn zeros(config: EncoderConfig) -> EncoderParams {
        let d = config.dim;
        EncoderParams {
            patch_embed: Linear::zeros(d, config.patch_dim()),
            cls_token: Array1::zeros(d),
            register_tokens: Array2::zeros((config.register_tokens, d)),
            pos_embed: Array2::zeros((1 + config.num_patches(), d)),
            blocks: (0..config.depth)
                .map(|_| BlockParams {
                    norm1: LayerNorm::identity(d),
                    qkv: Linear::zeros(3 * d, d),
                    proj: Linear::zeros(d, d),
                    norm2: LayerNorm::identity(d),
                    fc1: Linear::zeros(config.mlp_hidden, d),
                    fc2: Linear::zeros(d, config.mlp_hidden),
                })
                .collect(),
            norm: LayerNorm::identity(d),
            config,
        }
    }

    /// Random ViT initialization (truncated normal, std 0.02; zero biases;
    /// identity LayerNorms). Stands in for converted pretrained weights in
    /// synthetic runs.
    pub fn seeded(config: EncoderConfig, seed: u64) -> EncoderParams {
        let mut p = EncoderParams::zeros(config);
        let mut r = rng::named_substream(seed, "encoder-init", 0);
        let normal = Normal::new(0.0f32, 0.02).unwrap();
        let mut fill = |a: &mut dyn Iterator<Item = &mut f32>| {
            for v in a {
                *v = loop {
                    let s = normal.sample(&mut r);
                    if s.abs() <= 0.04 {
                        break s;
                    }
                };
            }
        };
        fill(&mut p.patch_embed.weight.iter_mut());
        fill(&mut p.cls_token.iter_mut());
        fill(&mut p.register_tokens.iter_mut());
        fill(&mut p.pos_embed.iter_mut());
        for b in &mut p.blocks {
            fill(&mut b.qkv.weight.iter_mut());
            fill(&mut b.proj.weight.iter_mut());
            fill(&mut b.fc1.weight.iter_mut());
            fill(&mut b.fc2.weight.iter_mut());
        }
        p
    }

    /// Perturbs every tensor with small uniform noise; used to exercise
    /// non-trivial biases and norms in tests.
    pub fn jitter_all(&mut self, seed: u64, scale: f32) {
        let mut r = rng::seeded(seed);
        let mut j = |a: &mut dyn Iterator<Item = &mut f32>| {
            for v in a {
                *v += r.random_range(-scale..scale);
            }
        };
        j(&mut self.patch_embed.bias.iter_mut());
        for b in &mut self.blocks {
            for ln in [&mut b.norm1, &mut b.norm2] {
                j(&mut ln.weight.iter_mut());
                j(&mut ln.bias.iter_mut());
            }
            for lin in [&mut b.qkv, &mut b.proj, &mut b.fc1, &mut b.fc2] {
                j(&mut lin.bias.iter_mut());
            }
        }
        j(&mut self.norm.weight.iter_mut());
        j(&mut self.norm.bias.iter_mut());
    }
}

/// Exact (erf-based) GELU.
#[inline]
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

/// Patchifies, projects, prepends CLS (and registers) and adds positional
/// embeddings. Output rows: CLS, registers, then patches in row-major order.
pub fn patch_embed(stack: &SliceStack, params: &EncoderParams) -> Result<Array2<f32>> {
    let cfg = &params.config;
    if stack.width != cfg.image_size || stack.height != cfg.image_size || stack.data.len() != cfg.image_size * cfg.image_size * STACK_DEPTH {
        return Err(Error::ShapeMismatch(format!(
            "encoder expects {0}x{0}x{STACK_DEPTH}, got {1}x{2}x{STACK_DEPTH}",
            cfg.image_size, stack.width, stack.height
        )));
    }
    let (g, ps) = (cfg.grid(), cfg.patch_size);
    let mut patches = Array2::<f32>::zeros((cfg.num_patches(), cfg.patch_dim()));
    for pr in 0..g {
        for pc in 0..g {
            let mut row = patches.row_mut(pr * g + pc);
            let mut k = 0;
            for c in 0..STACK_DEPTH {
                for py in 0..ps {
                    for px in 0..ps {
                        let v = stack.get(pc * ps + px, pr * ps + py, c);
                        row[k] = (v - cfg.input_mean) / cfg.input_std;
                        k += 1;
                    }
                }
            }
        }
    }
    let projected = params.patch_embed.forward(patches.view());

    let r = cfg.register_tokens;
    let mut tokens = Array2::<f32>::zeros((1 + r + cfg.num_patches(), cfg.dim));
    tokens.row_mut(0).assign(&(&params.cls_token + &params.pos_embed.row(0)));
    if r > 0 {
        tokens.slice_mut(s![1..1 + r, ..]).assign(&params.register_tokens);
    }
    let mut body = tokens.slice_mut(s![1 + r.., ..]);
    body.assign(&projected);
    body += &params.pos_embed.slice(s![1.., ..]);
    Ok(tokens)
}

fn softmax_rows(a: &mut Array2<f32>) {
    for mut row in a.rows_mut() {
        let max = row.fold(f32::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum += e;
            e
        });
        row /= sum;
    }
}

/// One pre-norm transformer block.
pub fn transformer_block(tokens: &Array2<f32>, block: &BlockParams, cfg: &EncoderConfig) -> Array2<f32> {
    let (t, d) = tokens.dim();
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f32).sqrt();

    let h = block.norm1.forward(tokens.view(), cfg.layer_norm_eps);
    let qkv = block.qkv.forward(h.view());
    let mut attended = Array2::<f32>::zeros((t, d));
    for head in 0..cfg.heads {
        let q = qkv.slice(s![.., head * hd..(head + 1) * hd]);
        let k = qkv.slice(s![.., d + head * hd..d + (head + 1) * hd]);
        let v = qkv.slice(s![.., 2 * d + head * hd..2 * d + (head + 1) * hd]);
        let mut scores = q.dot(&k.t());
        scores *= scale;
        softmax_rows(&mut scores);
        attended.slice_mut(s![.., head * hd..(head + 1) * hd]).assign(&scores.dot(&v));
    }
    let mut x = tokens + &block.proj.forward(attended.view());

    let h = block.norm2.forward(x.view(), cfg.layer_norm_eps);
    let mut hidden = block.fc1.forward(h.view());
    hidden.mapv_inplace(gelu);
    x += &block.fc2.forward(hidden.view());
    x
}

/// Full forward pass; returns the final-normed CLS token.
pub fn encode(stack: &SliceStack, params: &EncoderParams) -> Result<Embedding> {
    let mut x = patch_embed(stack, params)?;
    for block in &params.blocks {
        x = transformer_block(&x, block, &params.config);
    }
    let cls = x.slice(s![0..1, ..]);
    let out = params.norm.forward(cls, params.config.layer_norm_eps);
    let values: Vec<f32> = out.index_axis(Axis(0), 0).to_vec();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder output".into()));
    }
    Ok(Embedding(values))
}
