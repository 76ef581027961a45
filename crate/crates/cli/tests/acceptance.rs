//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines appear in order and
//! unbuffered. Criteria listed in [`KNOWN_SHORTFALLS`] still print FAIL; the
//! process exits nonzero when any other criterion fails or when a listed one
//! starts passing (so the list cannot go stale).

mod common;

use std::collections::VecDeque;
use std::f64::consts::LN_2;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use crsnet_cli::commands;
use crsnet_cli::RunConfig;
use crsnet_core::cohort::ClinicalRecord;
use crsnet_core::encoder::{encode, EncoderConfig, EncoderParams};
use crsnet_core::evaluation::{auc, bootstrap, quantile, reliability, resample_indices, Metric};
use crsnet_core::morphology::{connected_components, largest_cc_fraction, tumor_volume, Connectivity};
use crsnet_core::pipeline::{preprocess_patient, PreprocessConfig};
use crsnet_core::rng::seeded;
use crsnet_core::sliceselect::{lesion_density_profile, select_top_k};
use crsnet_core::synth::{render_patient, sample_patients, SynthConfig};
use crsnet_core::tarc::sha256_hex;
use crsnet_core::training::{class_weights, finite_difference_check, global_relative_error, head_gradients, wbce_loss, Batch};
use crsnet_core::volume::{resample_isotropic, resample_to};
use crsnet_core::volume::Volume;
use crsnet_core::{ClinicalStats, Geometry, HeadConfig, HeadParams, LesionMask};

type Outcome = anyhow::Result<(bool, String)>;

/// Criteria that fail for a documented reason (see the README).
///
/// 1: central differences in 32-bit floats cannot resolve the head's
/// gradients to 1e-3. Rounding of the loss dominates below h = 2e-4 and
/// ReLU kinks above it; the best global error over h in [1e-4, 5e-2] is
/// about 1.6e-3. The 64-bit check and the 32-bit analytic gradient (against
/// the 64-bit one) both pass comfortably.
const KNOWN_SHORTFALLS: [usize; 1] = [1];

// ---------------------------------------------------------------- oracles

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Scores on a coarse grid (many ties) with both classes present.
fn random_cohort(r: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<u8>) {
    let levels = r.random_range(2..=20) as f64;
    let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = labels
        .iter()
        .map(|&y| {
            let v: f64 = r.random::<f64>() + 0.3 * y as f64;
            (v * levels).round() / levels
        })
        .collect();
    (scores, labels)
}

/// Top-k by repeated selection: largest count, earliest slice first.
fn top_k_oracle(profile: &[usize], k: usize) -> Option<Vec<usize>> {
    if profile.iter().filter(|&&c| c > 0).count() < k {
        return None;
    }
    let mut taken = vec![false; profile.len()];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for (z, &c) in profile.iter().enumerate() {
            if !taken[z] && best.is_none_or(|b| c > profile[b]) {
                best = Some(z);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        out.push(b);
    }
    out.sort();
    Some(out)
}

/// Breadth-first flood fill; returns component sizes.
fn flood_fill_sizes(mask: &LesionMask, corners: bool) -> Vec<usize> {
    let [nx, ny, nz] = mask.geometry.dims;
    let mut seen = vec![false; mask.data.len()];
    let mut sizes = Vec::new();
    for start in 0..mask.data.len() {
        if mask.data[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y, z) = ((i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64);
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let manhattan = dx.abs() + dy.abs() + dz.abs();
                        if manhattan == 0 || (!corners && manhattan > 1) {
                            continue;
                        }
                        let (a, b, c) = (x + dx, y + dy, z + dz);
                        if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                            continue;
                        }
                        let j = a as usize + nx * (b as usize + ny * c as usize);
                        if mask.data[j] == 1 && !seen[j] {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

fn type7(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

// ------------------------------------------------------------- criteria

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let synth = SynthConfig {
        n_patients: 8,
        seed: 21,
        split_fractions: [1.0, 0.0, 0.0, 0.0],
        ..SynthConfig::default()
    };
    let encoder = EncoderParams::seeded(EncoderConfig::vit_small(), 21);
    let patients = sample_patients(&synth)?;
    let mut embeddings = Vec::new();
    let mut records = Vec::new();
    for p in &patients {
        let (ct, mask) = render_patient(&synth, p);
        let pre = preprocess_patient(&ct, &mask, &PreprocessConfig::default())?;
        embeddings.push(encode(&pre.stack, &encoder)?.0);
        records.push(ClinicalRecord::new(p.id.clone(), p.age, p.ca125, p.crs, p.split)?);
    }
    let labels: Vec<u8> = records.iter().map(ClinicalRecord::label).collect();
    let refs: Vec<&ClinicalRecord> = records.iter().collect();
    let features = crsnet_core::cohort::DEFAULT_FEATURES;
    let stats = ClinicalStats::fit(&refs, &features)?;
    let clinical: Vec<Vec<f64>> = records.iter().map(|r| stats.standardize_record(r)).collect();
    let weights = class_weights(&labels).unwrap_or((1.0, 1.0));
    let emb_refs: Vec<&[f32]> = embeddings.iter().map(Vec::as_slice).collect();
    let head = HeadConfig::default();
    let params: HeadParams<f64> = HeadParams::init(head, &mut seeded(21))?;

    let batch = Batch {
        embeddings: &emb_refs,
        clinical: &clinical,
        labels: &labels,
    };
    let c64 = finite_difference_check(&params, &batch, weights, 3, 1e-5, 64, 0)?;
    let g64 = global_relative_error(&c64);
    let worst64 = c64.iter().map(|c| c.rel_error(1e-3)).fold(0.0, f64::max);

    let clinical32: Vec<Vec<f32>> = clinical.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
    let batch32 = Batch {
        embeddings: &emb_refs,
        clinical: &clinical32,
        labels: &labels,
    };
    let p32: HeadParams<f32> = params.cast();
    let c32 = finite_difference_check(&p32, &batch32, (weights.0 as f32, weights.1 as f32), 3, 1e-3, 64, 0)?;
    let g32 = global_relative_error(&c32);
    let worst32 = c32
        .iter()
        .max_by(|a, b| a.rel_error(1e-3).total_cmp(&b.rel_error(1e-3)))
        .unwrap();
    // the 32-bit analytic gradient against the 64-bit one at the same point
    let (ga, _) = head_gradients(&p32, &batch32, (weights.0 as f32, weights.1 as f32), 3)?;
    let (gb, _) = head_gradients(&p32.cast::<f64>(), &batch, weights, 3)?;
    let (mut d2, mut n2) = (0.0f64, 0.0f64);
    for (a, b) in ga.tensors.iter().zip(&gb.tensors) {
        for (&x, &y) in a.iter().zip(b) {
            d2 += (x as f64 - y).powi(2);
            n2 += y * y;
        }
    }
    let elapsed = t.elapsed();
    let pass = g64 < 1e-6 && worst64 < 1e-6 && g32 < 1e-3 && elapsed < Duration::from_secs(30);
    Ok((
        pass,
        format!(
            "f64 global {g64:.1e}, worst tensor {worst64:.1e}; f32 global {g32:.1e}, worst tensor {} {:.1e}; f32 vs f64 analytic {:.1e}; {} tensors, {:.1?}",
            worst32.name,
            worst32.rel_error(1e-3),
            d2.sqrt() / n2.sqrt(),
            c32.len(),
            elapsed
        ),
    ))
}

fn auc_oracle() -> Outcome {
    let mut r = seeded(2);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = r.random_range(5..=200);
        let (s, y) = random_cohort(&mut r, n);
        worst = worst.max((auc(&s, &y)? - pairwise_auc(&s, &y)).abs());
    }
    Ok((worst < 1e-12, format!("500 cohorts, max |diff| {worst:.1e}")))
}

fn auc_monotone() -> Outcome {
    let mut r = seeded(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(5..=200);
        let (s, y) = random_cohort(&mut r, n);
        let base = auc(&s, &y)?;
        let cube: Vec<f64> = s.iter().map(|x| x * x * x).collect();
        let sig: Vec<f64> = s.iter().map(|x| 1.0 / (1.0 + (-(5.0 * x - 2.0)).exp())).collect();
        worst = worst.max((auc(&cube, &y)? - base).abs()).max((auc(&sig, &y)? - base).abs());
    }
    Ok((worst < 1e-12, format!("100 cohorts, max |diff| {worst:.1e}")))
}

fn slice_selection() -> Outcome {
    let mut r = seeded(4);
    let (mut mismatches, mut errors) = (0, 0);
    for _ in 0..1000 {
        let dims = [r.random_range(2..8), r.random_range(2..8), r.random_range(1..24)];
        let density: f64 = r.random_range(0.0..0.5);
        let geom = Geometry::new(dims, [1.0; 3], [0.0; 3])?;
        let data = (0..geom.len()).map(|_| (r.random::<f64>() < density) as u8).collect();
        let mask = Volume::new(geom, data)?;
        let profile = lesion_density_profile(&mask);
        let got = select_top_k(&profile, 3).ok();
        if got.is_none() {
            errors += 1;
        }
        if got != top_k_oracle(&profile, 3) || got.as_ref().is_some_and(|v| v.windows(2).any(|w| w[0] >= w[1])) {
            mismatches += 1;
        }
    }
    Ok((
        mismatches == 0,
        format!("1000 masks, {mismatches} mismatches ({errors} with under 3 lesion slices)"),
    ))
}

fn resampling() -> Outcome {
    let geom = Geometry::new([10, 12, 7], [2.0, 1.5, 3.0], [-4.0, 3.0, 10.0])?;
    let constant = Volume::filled(geom, 37.25f32);
    let iso = resample_isotropic(&constant, 1.0)?;
    let const_err = iso.data.iter().map(|&v| (v - 37.25).abs()).fold(0.0f32, f32::max) as f64;

    let ramp_at = |p: [f64; 3]| 0.3 * p[0] - 0.2 * p[1] + 0.1 * p[2] + 1.0;
    let ramp = Volume::from_fn(geom, |x, y, z| ramp_at([geom.center(0, x), geom.center(1, y), geom.center(2, z)]) as f32);
    let out = resample_isotropic(&ramp, 1.0)?;
    let g = out.geometry;
    let inside = |a: usize, i: usize| {
        let c = g.center(a, i);
        c >= geom.center(a, 0) && c <= geom.center(a, geom.dims[a] - 1)
    };
    let mut ramp_err = 0.0f64;
    let mut interior = 0;
    for z in 0..g.dims[2] {
        for y in 0..g.dims[1] {
            for x in 0..g.dims[0] {
                if inside(0, x) && inside(1, y) && inside(2, z) {
                    interior += 1;
                    let want = ramp_at([g.center(0, x), g.center(1, y), g.center(2, z)]);
                    ramp_err = ramp_err.max((out.get(x, y, z) as f64 - want).abs());
                }
            }
        }
    }

    let cube = Volume::filled(Geometry::new([10; 3], [2.0; 3], [0.0; 3])?, 0.0f32);
    let shape = resample_isotropic(&cube, 1.0)?.geometry.dims;
    let direct = resample_to(&cube, Geometry::new([20; 3], [1.0; 3], [-0.5; 3])?)?;
    let pass = const_err <= 1e-6 && ramp_err <= 1e-5 && interior > 0 && shape == [20, 20, 20] && direct.data.len() == 8000;
    Ok((
        pass,
        format!("constant {const_err:.1e}, ramp {ramp_err:.1e} over {interior} interior voxels, 10^3 @2mm -> {shape:?} @1mm"),
    ))
}

struct EndToEnd {
    encoder_before: String,
    encoder_after: String,
    test_auc: Option<f64>,
    elapsed: Duration,
    eval: commands::EvalOutcome,
}

fn load_config_into(dir: &Path, text: &str) -> anyhow::Result<RunConfig> {
    RunConfig::load(&common::write_config(dir, text), &Default::default())
}

fn end_to_end(root: &Path) -> anyhow::Result<EndToEnd> {
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml"))?
        .replace("../data/synthetic/", "data/")
        .replace("\"../runs\"", "\"out\"");
    let cfg = load_config_into(root, &text)?;
    let t = Instant::now();
    commands::cmd_synth(&cfg)?;
    let encoder_before = sha256_hex(&fs::read(&cfg.paths.encoder)?);
    commands::cmd_preprocess(&cfg)?;
    commands::cmd_train(&cfg)?;
    let eval = commands::cmd_evaluate(&cfg)?;
    let elapsed = t.elapsed();
    let encoder_after = sha256_hex(&fs::read(&cfg.paths.encoder)?);
    let test_auc = eval
        .report("test", "tau_0.5")
        .and_then(|r| r.metric(Metric::Auc))
        .and_then(|m| m.point);
    Ok(EndToEnd {
        encoder_before,
        encoder_after,
        test_auc,
        elapsed,
        eval,
    })
}

fn frozen_encoder(e: &EndToEnd) -> Outcome {
    Ok((
        e.encoder_before == e.encoder_after,
        format!("encoder sha256 {} before and {} after training", &e.encoder_before[..12], &e.encoder_after[..12]),
    ))
}

fn determinism(root: &Path) -> Outcome {
    let text = common::small_toml(17, 40, [0.6, 0.1, 0.15, 0.15]);
    let mut trees = Vec::new();
    for d in ["a", "b"] {
        let cfg = load_config_into(&root.join(d), &text)?;
        commands::cmd_synth(&cfg)?;
        commands::cmd_preprocess(&cfg)?;
        let trained = commands::cmd_train(&cfg)?;
        let eval = commands::cmd_evaluate(&cfg)?;
        let mut files = common::tree(&trained.checkpoint_dir);
        files.extend(common::tree(&eval.dir));
        trees.push(files);
    }
    let differing: Vec<String> = trees[0]
        .iter()
        .zip(&trees[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.display().to_string())
        .collect();
    let same = trees[0].len() == trees[1].len() && differing.is_empty();
    Ok((
        same,
        format!("{} checkpoint and report files compared, {} differ", trees[0].len(), differing.len()),
    ))
}

fn discrimination(e: &EndToEnd) -> Outcome {
    let pass = e.test_auc.is_some_and(|a| a >= 0.90) && e.elapsed < Duration::from_secs(15 * 60);
    Ok((
        pass,
        format!(
            "test AUC {} (n=320, 240/40/40), synth + preprocess + train + evaluate in {:.0?}",
            fmt_auc(e.test_auc),
            e.elapsed
        ),
    ))
}

fn threshold_policy(e: &EndToEnd) -> Outcome {
    let base = e.eval.report("test", "tau_0.5").ok_or_else(|| anyhow::anyhow!("no tau_0.5 row"))?;
    let (name, tau) = &e.eval.policy_row;
    let pol = e.eval.report("test", name).unwrap_or(base);
    let prec = |r: &crsnet_core::evaluation::EvalReport| r.metric(Metric::Precision).and_then(|m| m.point);
    let (p0, p1) = (prec(base), prec(pol));
    let (fp0, fp1) = (base.confusion.fp, pol.confusion.fp);
    let pass = match (p0, p1) {
        (Some(a), Some(b)) => b >= a && fp1 <= fp0,
        (None, _) => fp1 <= fp0,
        (Some(_), None) => false,
    };
    let fmt = |p: Option<f64>| p.map_or("undefined".into(), |v| format!("{v:.3}"));
    Ok((
        pass,
        format!("{name} tau={tau:.3}: precision {} vs {} at 0.5, FP {fp1} vs {fp0}", fmt(p1), fmt(p0)),
    ))
}

fn ablation_direction(root: &Path) -> Outcome {
    let text = common::small_toml(10, 320, [0.6, 0.1, 0.1, 0.2])
        .replace("max_epochs = 15", "max_epochs = 100")
        .replace("batch_size = 8", "batch_size = 32")
        .replace("resamples = 200", "resamples = 1000");
    let cfg = load_config_into(root, &text)?;
    commands::cmd_synth(&cfg)?;
    commands::cmd_preprocess(&cfg)?;
    let out = commands::cmd_ablate(&cfg)?;
    let ext = |name: &str| {
        out.rows
            .iter()
            .find(|r| r.config.name == name)
            .and_then(|r| r.external_auc.as_ref())
            .and_then(|m| m.point)
    };
    let (ct, full) = (ext("ct"), ext("ct+age+ca125"));
    let pass = matches!((ct, full), (Some(c), Some(f)) if f >= c - 0.02);
    Ok((
        pass,
        format!(
            "external AUC ct+age+ca125 {} vs ct only {} ({} external patients)",
            fmt_auc(full),
            fmt_auc(ct),
            patients_in(&cfg, "external")?
        ),
    ))
}

fn fmt_auc(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |a| format!("{a:.3}"))
}

fn patients_in(cfg: &RunConfig, split: &str) -> anyhow::Result<usize> {
    let cohort = commands::load_cohort(cfg)?;
    Ok(cohort.iter().filter(|(e, _)| e.split.to_string() == split).count())
}

fn morphology_oracles() -> Outcome {
    let mut r = seeded(11);
    let mut worst_vol = 0.0f64;
    for _ in 0..20 {
        let axes = [r.random_range(10.0..16.0), r.random_range(10.0..16.0), r.random_range(10.0..16.0)];
        let centre = [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)];
        let geom = Geometry::new([40; 3], [1.0; 3], [-19.5; 3])?;
        let mask: LesionMask = Volume::from_fn(geom, |x, y, z| {
            let p = [geom.center(0, x), geom.center(1, y), geom.center(2, z)];
            let q: f64 = (0..3).map(|a| ((p[a] - centre[a]) / axes[a]).powi(2)).sum();
            (q <= 1.0) as u8
        });
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * axes[0] * axes[1] * axes[2] / 1000.0;
        worst_vol = worst_vol.max((tumor_volume(&mask)? - analytic).abs() / analytic);
    }

    let geom = Geometry::new([3; 3], [1.0; 3], [0.0; 3])?;
    let mut corner = Volume::filled(geom, 0u8);
    corner.data[geom.index(0, 0, 0)] = 1;
    corner.data[geom.index(1, 1, 1)] = 1;
    let c26 = connected_components(&corner, Connectivity::TwentySix).count();
    let c6 = connected_components(&corner, Connectivity::Six).count();
    let corner_ok = c26 == 1 && c6 == 2 && largest_cc_fraction(&corner, Connectivity::Six)? == 0.5;

    let mut flood_mismatch = 0;
    for _ in 0..200 {
        let dims = [r.random_range(3..14), r.random_range(3..14), r.random_range(3..14)];
        let density: f64 = r.random_range(0.05..0.45);
        let geom = Geometry::new(dims, [1.0; 3], [0.0; 3])?;
        let mut data: Vec<u8> = (0..geom.len()).map(|_| (r.random::<f64>() < density) as u8).collect();
        data[0] = 1;
        let mask = Volume::new(geom, data)?;
        for (conn, corners) in [(Connectivity::Six, false), (Connectivity::TwentySix, true)] {
            let sizes = flood_fill_sizes(&mask, corners);
            let total: usize = sizes.iter().sum();
            let want = *sizes.iter().max().unwrap() as f64 / total as f64;
            if largest_cc_fraction(&mask, conn)? != want {
                flood_mismatch += 1;
            }
        }
    }
    let pass = worst_vol < 0.02 && corner_ok && flood_mismatch == 0;
    Ok((
        pass,
        format!(
            "ellipsoid volume error {:.2}% (20 shapes, radii 10-16 mm); corner pair: {c26} component at 26, {c6} at 6; flood fill mismatches {flood_mismatch}/400",
            100.0 * worst_vol
        ),
    ))
}

fn bootstrap_checks() -> Outcome {
    let mut r = seeded(12);
    let metrics: Vec<Metric> = Metric::PERFORMANCE.iter().chain(&Metric::CONFUSION).copied().collect();
    let (mut unbracketed, mut quantile_mismatch, mut summaries) = (0, 0, 0);
    for c in 0..50u64 {
        let n = r.random_range(20..120);
        let labels: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let scores: Vec<f64> = labels.iter().map(|&y| (r.random::<f64>() + 0.4 * y as f64) / 1.4).collect();
        let out = bootstrap(&scores, &labels, 0.5, &metrics, 200, c)?;
        for (k, s) in out.iter().enumerate() {
            summaries += 1;
            if !(s.ci_low <= s.median && s.median <= s.ci_high) {
                unbracketed += 1;
            }
            let mut v: Vec<f64> = (0..200)
                .filter_map(|b| {
                    let idx = resample_indices(n, c, b);
                    let ss: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
                    let yy: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
                    metrics[k].evaluate(&ss, &yy, 0.5)
                })
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want = [type7(&v, 0.025), type7(&v, 0.5), type7(&v, 0.975)];
            if [s.ci_low, s.median, s.ci_high] != want || quantile(&v, 0.5) != want[1] {
                quantile_mismatch += 1;
            }
        }
    }
    Ok((
        unbracketed == 0 && quantile_mismatch == 0,
        format!("{summaries} metric summaries over 50 cohorts: {unbracketed} unbracketed, {quantile_mismatch} quantile mismatches"),
    ))
}

fn calibration() -> Outcome {
    let mut r = seeded(13);
    let scores: Vec<f64> = (0..10_000).map(|_| r.random::<f64>()).collect();
    let labels: Vec<u8> = scores.iter().map(|&p| (r.random::<f64>() < p) as u8).collect();
    let bins = reliability(&scores, &labels, 10)?;
    let gap = bins
        .iter()
        .filter_map(|b| Some((b.mean_score? - b.frac_pos?).abs()))
        .fold(0.0, f64::max);
    let populated = bins.iter().filter(|b| b.count > 0).count();
    Ok((gap < 0.03, format!("10000 Bernoulli draws, max bin gap {gap:.4} over {populated} bins")))
}

fn wbce_reduction() -> Outcome {
    let mut r = seeded(14);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p: f64 = r.random_range(1e-6..1.0 - 1e-6);
        let y = r.random_range(0..2u8);
        let bce = if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
        worst = worst.max((wbce_loss(p, y, 1.0, 1.0) - bce).abs());
    }
    let ln2 = wbce_loss(0.5f64, 1, 1.0, 1.0) == LN_2 && wbce_loss(0.5f64, 0, 1.0, 1.0) == LN_2;
    let weighted = wbce_loss(0.9f64, 1, 2.0, 1.0);
    let pass = worst < 1e-12 && ln2 && weighted == -2.0 * 0.9f64.ln();
    Ok((
        pass,
        format!("max |WBCE - BCE| {worst:.1e} over 10000 pairs; L(0.5) = ln 2: {ln2}; L(0.9, y=1, w=2) = {weighted:.6}"),
    ))
}

// ---------------------------------------------------------------- driver

fn report(id: usize, name: &str, outcome: Outcome) -> bool {
    let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e:#}")));
    println!("criterion {id:>2} {}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let mut results = vec![
        report(1, "gradient fidelity", gradient_fidelity()),
        report(2, "AUC pairwise oracle", auc_oracle()),
        report(3, "AUC monotone invariance", auc_monotone()),
        report(4, "slice selection oracle", slice_selection()),
        report(5, "resampling", resampling()),
    ];

    let e2e = end_to_end(&root.join("e2e"));
    let with = |f: fn(&EndToEnd) -> Outcome| -> Outcome {
        match &e2e {
            Ok(e) => f(e),
            Err(err) => Err(anyhow::anyhow!("end-to-end run failed: {err:#}")),
        }
    };
    results.push(report(6, "frozen encoder", with(frozen_encoder)));
    results.push(report(7, "determinism", determinism(&root.join("determinism"))));
    results.push(report(8, "synthetic discrimination", with(discrimination)));
    results.push(report(9, "threshold policy", with(threshold_policy)));
    results.push(report(10, "ablation direction", ablation_direction(&root.join("ablation"))));
    results.push(report(11, "morphology oracles", morphology_oracles()));
    results.push(report(12, "bootstrap", bootstrap_checks()));
    results.push(report(13, "calibration harness", calibration()));
    results.push(report(14, "WBCE reduction", wbce_reduction()));

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    let mut ok = true;
    for (i, &pass) in results.iter().enumerate() {
        let id = i + 1;
        match (pass, KNOWN_SHORTFALLS.contains(&id)) {
            (false, true) => println!("criterion {id:>2} is a documented shortfall"),
            (true, true) => {
                println!("criterion {id:>2} now passes; remove it from KNOWN_SHORTFALLS");
                ok = false;
            }
            (false, false) => ok = false,
            (true, false) => {}
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
