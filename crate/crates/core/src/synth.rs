//! Synthetic cohorts with a known label model.
//!
//! Each patient has three standard-normal latents: `z_vol` sets the total
//! lesion volume, `z_ca` the log CA-125 and `z_age` the age. The label is
//!
//! ```text
//! eta = b0 + beta_vol * z_vol + beta_ca * z_ca + beta_age * z_age
//! y   = 1[eta + s * L > 0],   L ~ Logistic(0, 1)
//! ```
//!
//! so `P(y = 1) = sigmoid(eta / s)`. The intercept `b0` is solved so the
//! marginal positive rate equals the configured prior. With negative
//! volume and CA-125 effects, smaller burden means a higher chance of a
//! complete response.

use std::f64::consts::{PI, SQRT_2};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{write_manifest, Crs, ManifestEntry, Split};
use crate::csvio::{self, Provenance};
use crate::error::{Error, Result};
use crate::fusion::sigmoid;
use crate::rng::{self, StreamRng, RNG_ALGORITHM};
use crate::volume::{rvol, CtVolume, Geometry, LesionMask, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub grid: [usize; 3],
    pub spacing_mm: [f64; 3],
    /// Inclusive range of lesions per patient.
    pub lesion_count: (usize, usize),
    /// Range of the radius of a sphere holding the patient's total lesion
    /// volume; `z_vol` maps onto it through the normal CDF.
    pub radius_mm: (f64, f64),
    /// Semi-axes are scaled by `exp(U(-j, j))` (volume preserving).
    pub aspect_jitter: f64,
    pub volume_effect: f64,
    pub ca125_effect: f64,
    pub age_effect: f64,
    /// Scale of the logistic label noise; 0 makes labels deterministic.
    pub noise: f64,
    pub prior: f64,
    /// Train, val, test, external.
    pub split_fractions: [f64; 4],
    /// HU offset applied to external-split lesions (scanner shift).
    pub external_hu_shift: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 320,
            seed: 0,
            grid: [128, 128, 64],
            spacing_mm: [1.0, 1.0, 2.0],
            lesion_count: (1, 3),
            radius_mm: (8.0, 20.0),
            aspect_jitter: 0.2,
            volume_effect: -2.0,
            ca125_effect: -1.5,
            age_effect: 0.3,
            noise: 0.3,
            prior: 0.3,
            split_fractions: [0.75, 0.125, 0.125, 0.0],
            external_hu_shift: 15.0,
        }
    }
}

pub const BACKGROUND_HU: f64 = -100.0;
pub const BACKGROUND_NOISE_HU: f64 = 10.0;
pub const LESION_HU: (f64, f64) = (30.0, 60.0);
pub const LESION_NOISE_HU: f64 = 5.0;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synth: {m}")));
        if self.n_patients == 0 {
            return bad("n_patients must be positive".into());
        }
        Geometry::new(self.grid, self.spacing_mm, [0.0; 3]).map_err(|e| Error::Config(format!("synth grid: {e}")))?;
        let (lo, hi) = self.lesion_count;
        if lo == 0 || hi < lo {
            return bad(format!("invalid lesion count range {lo}..={hi}"));
        }
        let (rmin, rmax) = self.radius_mm;
        if !(rmin > 0.0 && rmax >= rmin && rmax.is_finite()) {
            return bad(format!("invalid radius range ({rmin}, {rmax})"));
        }
        if !(0.0..1.0).contains(&self.aspect_jitter) {
            return bad("aspect_jitter must lie in [0, 1)".into());
        }
        let reach = self.max_semi_axis() + 2.0 * self.spacing_mm.iter().cloned().fold(0.0, f64::max);
        let extent = (0..3).map(|a| self.grid[a] as f64 * self.spacing_mm[a]).fold(f64::INFINITY, f64::min);
        if 2.0 * reach > extent {
            return bad(format!("lesions up to {reach:.1} mm from their centre do not fit a {extent:.1} mm field"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be non-negative".into());
        }
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return bad("prior must lie in (0, 1)".into());
        }
        for e in [self.volume_effect, self.ca125_effect, self.age_effect, self.external_hu_shift] {
            if !e.is_finite() {
                return bad("effects must be finite".into());
            }
        }
        let f = self.split_fractions;
        if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions {f:?} must be in [0, 1] and sum to 1"));
        }
        Ok(())
    }

    fn max_semi_axis(&self) -> f64 {
        self.radius_mm.1 * (2.0 * self.aspect_jitter).exp()
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.grid, self.spacing_mm, [0.0; 3]).expect("validated grid")
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Inverse standard normal CDF by bisection.
pub fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub z_vol: f64,
    pub z_ca: f64,
    pub z_age: f64,
}

/// Label model with its solved intercept.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelModel {
    pub intercept: f64,
    pub beta: [f64; 3],
    pub noise: f64,
}

impl LabelModel {
    pub fn new(cfg: &SynthConfig) -> LabelModel {
        let beta = [cfg.volume_effect, cfg.ca125_effect, cfg.age_effect];
        LabelModel {
            intercept: solve_intercept(beta, cfg.noise, cfg.prior),
            beta,
            noise: cfg.noise,
        }
    }

    pub fn eta(&self, z: &Latent) -> f64 {
        self.intercept + self.beta[0] * z.z_vol + self.beta[1] * z.z_ca + self.beta[2] * z.z_age
    }

    /// Ground-truth `P(y = 1)`.
    pub fn probability(&self, z: &Latent) -> f64 {
        let eta = self.eta(z);
        if self.noise > 0.0 {
            sigmoid(eta / self.noise)
        } else if eta > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

/// Intercept `b0` with `E[P(y = 1)] = prior` when the linear part is
/// `N(0, sum beta^2)`. The expectation is integrated with Simpson's rule
/// and `b0` found by bisection; without noise it has a closed form.
fn solve_intercept(beta: [f64; 3], noise: f64, prior: f64) -> f64 {
    let sd = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    if sd == 0.0 {
        return if noise > 0.0 { noise * (prior / (1.0 - prior)).ln() } else { 0.0 };
    }
    if noise == 0.0 {
        // P(b0 + sd Z > 0) = prior
        return sd * normal_quantile(prior);
    }
    let marginal = |b0: f64| {
        let m = 2000;
        let (a, b) = (-10.0, 10.0);
        let h = (b - a) / m as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt() * sigmoid((b0 + sd * t) / noise);
        let mut s = f(a) + f(b);
        for i in 1..m {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let (mut lo, mut hi) = (-100.0, 100.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if marginal(mid) < prior {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ground-truth probability of a complete response for `latent`.
pub fn oracle_score(latent: &Latent, cfg: &SynthConfig) -> f64 {
    LabelModel::new(cfg).probability(latent)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    /// Centre in physical mm.
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub hu: f64,
}

impl Ellipsoid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).map(|a| ((p[a] - self.center[a]) / self.semi_axes[a]).powi(2)).sum::<f64>() <= 1.0
    }

    pub fn volume_mm3(&self) -> f64 {
        4.0 / 3.0 * PI * self.semi_axes.iter().product::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPatient {
    pub id: String,
    pub index: usize,
    pub latent: Latent,
    pub age: f64,
    pub ca125: f64,
    pub label: u8,
    pub crs: Crs,
    pub split: Split,
    /// Planned total lesion volume (before digitization and overlap).
    pub planned_volume_mm3: f64,
    pub lesions: Vec<Ellipsoid>,
    pub oracle: f64,
}

fn patient_rng(cfg: &SynthConfig, index: usize) -> StreamRng {
    rng::named_substream(cfg.seed, "patient", index as u64)
}

/// Split per patient: fractions are rounded to counts and assigned after a
/// seeded shuffle; the remainder goes to the last split with a positive
/// fraction.
pub fn assign_splits(cfg: &SynthConfig) -> Vec<Split> {
    let n = cfg.n_patients;
    let mut counts: Vec<usize> = cfg.split_fractions.iter().map(|f| (f * n as f64).round() as usize).collect();
    let last = (0..4).rev().find(|&i| cfg.split_fractions[i] > 0.0).unwrap_or(0);
    let assigned: usize = counts.iter().sum();
    if assigned > n {
        let mut excess = assigned - n;
        for c in counts.iter_mut().rev() {
            let d = excess.min(*c);
            *c -= d;
            excess -= d;
        }
    } else {
        counts[last] += n - assigned;
    }
    let mut splits: Vec<Split> = Split::ALL.iter().zip(&counts).flat_map(|(&s, &c)| std::iter::repeat_n(s, c)).collect();
    splits.shuffle(&mut rng::named_substream(cfg.seed, "split", 0));
    splits
}

/// Draws latents, clinical values, label and lesion layout for every
/// patient (no voxels).
pub fn sample_patients(cfg: &SynthConfig) -> Result<Vec<SynthPatient>> {
    cfg.validate()?;
    let model = LabelModel::new(cfg);
    let splits = assign_splits(cfg);
    let geom = cfg.geometry();
    let lower = geom.lower_corner();
    let extent = geom.extent();
    let width = (cfg.n_patients - 1).to_string().len().max(3);
    Ok((0..cfg.n_patients)
        .map(|i| {
            let mut r = patient_rng(cfg, i);
            let mut normal = || -> f64 { StandardNormal.sample(&mut r) };
            let latent = Latent {
                z_vol: normal(),
                z_ca: normal(),
                z_age: normal(),
            };
            let age = (63.0 + 8.0 * latent.z_age).clamp(30.0, 90.0);
            let ca125 = (900f64.ln() + latent.z_ca).exp();
            let oracle = model.probability(&latent);
            let logistic_noise = {
                let u: f64 = r.random_range(f64::EPSILON..1.0);
                (u / (1.0 - u)).ln()
            };
            let label = (model.eta(&latent) + cfg.noise * logistic_noise > 0.0) as u8;
            let crs = match (label, latent.z_vol > 0.0) {
                (1, _) => Crs::Three,
                (_, true) => Crs::One,
                _ => Crs::Two,
            };

            let radius = cfg.radius_mm.0 + (cfg.radius_mm.1 - cfg.radius_mm.0) * normal_cdf(latent.z_vol);
            let planned = 4.0 / 3.0 * PI * radius.powi(3);
            let k = r.random_range(cfg.lesion_count.0..=cfg.lesion_count.1);
            let weights: Vec<f64> = (0..k).map(|_| 0.5 + r.random::<f64>()).collect();
            let wsum: f64 = weights.iter().sum();
            let base_hu = r.random_range(LESION_HU.0 + LESION_NOISE_HU..=LESION_HU.1 - LESION_NOISE_HU);
            let shift = if splits[i] == Split::External { cfg.external_hu_shift } else { 0.0 };
            let mut lesions: Vec<Ellipsoid> = Vec::with_capacity(k);
            for w in weights {
                let rj = radius * (w / wsum).cbrt();
                let j = cfg.aspect_jitter;
                let (e1, e2) = ((r.random_range(-j..=j)).exp(), (r.random_range(-j..=j)).exp());
                let semi_axes = [rj * e1, rj * e2, rj / (e1 * e2)];
                let reach = semi_axes.iter().cloned().fold(0.0, f64::max) + 2.0 * geom.spacing.iter().cloned().fold(0.0, f64::max);
                let mut center = [0.0; 3];
                for _attempt in 0..100 {
                    center = std::array::from_fn(|a| lower[a] + r.random_range(reach..=extent[a] - reach));
                    let clear = lesions.iter().all(|o| {
                        let d = (0..3).map(|a| (o.center[a] - center[a]).powi(2)).sum::<f64>().sqrt();
                        d > reach + o.semi_axes.iter().cloned().fold(0.0, f64::max)
                    });
                    if clear {
                        break;
                    }
                }
                lesions.push(Ellipsoid {
                    center,
                    semi_axes,
                    hu: base_hu + shift,
                });
            }
            SynthPatient {
                id: format!("syn{i:0width$}"),
                index: i,
                latent,
                age,
                ca125,
                label,
                crs,
                split: splits[i],
                planned_volume_mm3: planned,
                lesions,
                oracle,
            }
        })
        .collect())
}

/// Voxelizes a patient: lesion voxels get their lesion's HU plus uniform
/// noise (clamped to the lesion range, then shifted for external
/// patients), background is -100 HU plus noise.
pub fn render_patient(cfg: &SynthConfig, p: &SynthPatient) -> (CtVolume, LesionMask) {
    let geom = cfg.geometry();
    let mut r = rng::named_substream(cfg.seed, "voxels", p.index as u64);
    let mut mask = Volume::filled(geom, 0u8);
    let mut owner: Vec<Option<usize>> = vec![None; geom.len()];
    for (li, l) in p.lesions.iter().enumerate() {
        // voxel bounding box of the ellipsoid
        let range = |a: usize| {
            let lo = ((l.center[a] - l.semi_axes[a] - geom.origin[a]) / geom.spacing[a]).floor().max(0.0) as usize;
            let hi = (((l.center[a] + l.semi_axes[a] - geom.origin[a]) / geom.spacing[a]).ceil() as usize).min(geom.dims[a] - 1);
            lo..=hi
        };
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    let c = [geom.center(0, x), geom.center(1, y), geom.center(2, z)];
                    if l.contains(c) {
                        let i = geom.index(x, y, z);
                        mask.data[i] = 1;
                        owner[i].get_or_insert(li);
                    }
                }
            }
        }
    }
    let shift = if p.split == Split::External { cfg.external_hu_shift } else { 0.0 };
    let data = owner
        .iter()
        .map(|o| match o {
            Some(li) => {
                let hu = p.lesions[*li].hu - shift + r.random_range(-LESION_NOISE_HU..=LESION_NOISE_HU);
                (hu.clamp(LESION_HU.0, LESION_HU.1) + shift) as f32
            }
            None => (BACKGROUND_HU + r.random_range(-BACKGROUND_NOISE_HU..=BACKGROUND_NOISE_HU)) as f32,
        })
        .collect();
    (Volume { geometry: geom, data }, mask)
}

#[derive(Clone, Debug)]
pub struct SynthCohort {
    pub manifest: PathBuf,
    pub patients: Vec<SynthPatient>,
}

pub const TRUTH_HEADER: [&str; 9] = [
    "patient_id",
    "split",
    "label",
    "z_vol",
    "z_ca",
    "z_age",
    "planned_volume_cm3",
    "lesion_count",
    "oracle_score",
];

/// Writes `volumes/`, `masks/`, `manifest.csv`, `clinical.csv` and
/// `truth.csv` under `out`.
pub fn generate_cohort(cfg: &SynthConfig, out: &Path, provenance: &Provenance) -> Result<SynthCohort> {
    let patients = sample_patients(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    patients.par_iter().try_for_each(|p| -> Result<()> {
        let (ct, mask) = render_patient(cfg, p);
        rvol::write_volume(out.join("volumes").join(format!("{}.rvol", p.id)), &ct)?;
        rvol::write_mask(out.join("masks").join(format!("{}.rvol", p.id)), &mask)
    })?;
    let prov = provenance.clone().with("rng", RNG_ALGORITHM).with("synth_seed", cfg.seed);
    let entries: Vec<ManifestEntry> = patients
        .iter()
        .map(|p| ManifestEntry {
            patient_id: p.id.clone(),
            volume_path: PathBuf::from("volumes").join(format!("{}.rvol", p.id)),
            mask_path: PathBuf::from("masks").join(format!("{}.rvol", p.id)),
            age: Some(p.age),
            ca125: Some(p.ca125),
            crs: p.crs.grade(),
            split: p.split,
        })
        .collect();
    let manifest = out.join("manifest.csv");
    write_manifest(&manifest, &prov, &entries)?;

    let clinical: Vec<Vec<String>> = patients
        .iter()
        .map(|p| {
            vec![
                p.id.clone(),
                csvio::num(p.age),
                csvio::num(p.ca125),
                p.crs.grade().to_string(),
                p.split.to_string(),
            ]
        })
        .collect();
    csvio::write(&out.join("clinical.csv"), &prov, &["patient_id", "age", "ca125", "crs", "split"], &clinical)?;

    let truth: Vec<Vec<String>> = patients
        .iter()
        .map(|p| {
            vec![
                p.id.clone(),
                p.split.to_string(),
                p.label.to_string(),
                csvio::num(p.latent.z_vol),
                csvio::num(p.latent.z_ca),
                csvio::num(p.latent.z_age),
                csvio::num(p.planned_volume_mm3 / 1000.0),
                p.lesions.len().to_string(),
                csvio::num(p.oracle),
            ]
        })
        .collect();
    csvio::write(&out.join("truth.csv"), &prov, &TRUTH_HEADER, &truth)?;
    Ok(SynthCohort { manifest, patients })
}
