#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use crsnet_cli::{Overrides, RunConfig};

/// A cohort and model small enough to run every command in a few seconds.
pub fn small_toml(seed: u64, n: usize, fractions: [f64; 4]) -> String {
    format!(
        r#"
seed = {seed}
[paths]
manifest = "data/manifest.csv"
encoder = "data/encoder.tarc"
out = "out"
[synth]
n_patients = {n}
grid = [48, 48, 24]
spacing_mm = [1.5, 1.5, 3.0]
radius_mm = [9.0, 14.0]
split_fractions = {fractions:?}
[preprocess]
grid = [32, 32, 16]
[encoder]
image_size = 32
patch_size = 8
dim = 32
depth = 2
heads = 2
mlp_hidden = 64
[model]
hidden = [16, 8]
[train]
max_epochs = 15
batch_size = 8
peak_lr = 1e-3
[eval]
resamples = 200
policy = "max_f1"
cohorts = ["test", "external"]
"#
    )
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

pub fn load(path: &Path) -> RunConfig {
    RunConfig::load(path, &Overrides::default()).unwrap()
}

/// Data lines of a stamped CSV (comment lines and header dropped).
pub fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

/// Every file below `dir` with its contents, sorted by relative path.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
