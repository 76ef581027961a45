//! Clinical records, label semantics and the cohort manifest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::csvio::{self, Provenance};
use crate::error::{Error, Result};

/// Histopathologic chemotherapy response score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Crs {
    One,
    Two,
    Three,
}

impl Crs {
    pub fn from_grade(grade: u8) -> Result<Crs> {
        match grade {
            1 => Ok(Crs::One),
            2 => Ok(Crs::Two),
            3 => Ok(Crs::Three),
            g => Err(Error::InvalidRecord(format!("CRS grade must be 1, 2 or 3, got {g}"))),
        }
    }

    pub fn grade(self) -> u8 {
        match self {
            Crs::One => 1,
            Crs::Two => 2,
            Crs::Three => 3,
        }
    }
}

/// The one mapping from CRS grade to binary label: CRS 1-2 -> 0, CRS 3 -> 1.
pub fn response_label(crs: Crs) -> u8 {
    match crs {
        Crs::One | Crs::Two => 0,
        Crs::Three => 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    External,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::Test, Split::External];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::External => "external",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Split> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "external" => Ok(Split::External),
            other => Err(Error::InvalidRecord(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub patient_id: String,
    /// Years.
    pub age: f64,
    /// U/mL.
    pub ca125: f64,
    pub crs: Crs,
    pub split: Split,
}

impl ClinicalRecord {
    pub fn new(patient_id: impl Into<String>, age: f64, ca125: f64, crs: Crs, split: Split) -> Result<Self> {
        let rec = ClinicalRecord {
            patient_id: patient_id.into(),
            age,
            ca125,
            crs,
            split,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.age > 0.0 && self.age < 130.0) {
            return Err(Error::InvalidRecord(format!("{}: age {} outside (0, 130)", self.patient_id, self.age)));
        }
        if !(self.ca125 >= 0.0 && self.ca125.is_finite()) {
            return Err(Error::InvalidRecord(format!("{}: CA-125 {} must be >= 0", self.patient_id, self.ca125)));
        }
        Ok(())
    }

    pub fn label(&self) -> u8 {
        response_label(self.crs)
    }
}

/// Clinical variables available to the fusion head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClinicalFeature {
    Age,
    Ca125,
}

impl ClinicalFeature {
    pub fn value(self, rec: &ClinicalRecord) -> f64 {
        match self {
            ClinicalFeature::Age => rec.age,
            ClinicalFeature::Ca125 => rec.ca125,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClinicalFeature::Age => "age",
            ClinicalFeature::Ca125 => "ca125",
        }
    }
}

pub const DEFAULT_FEATURES: [ClinicalFeature; 2] = [ClinicalFeature::Age, ClinicalFeature::Ca125];

pub fn feature_vector(rec: &ClinicalRecord, features: &[ClinicalFeature]) -> Vec<f64> {
    features.iter().map(|f| f.value(rec)).collect()
}

/// One manifest row as written on disk. Clinical fields may be missing;
/// such rows are excluded before modelling.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub patient_id: String,
    pub volume_path: PathBuf,
    pub mask_path: PathBuf,
    pub age: Option<f64>,
    pub ca125: Option<f64>,
    pub crs: u8,
    pub split: Split,
}

impl ManifestEntry {
    pub fn record(&self) -> Result<ClinicalRecord> {
        let age = self
            .age
            .ok_or_else(|| Error::InvalidRecord(format!("{}: missing age", self.patient_id)))?;
        let ca125 = self
            .ca125
            .ok_or_else(|| Error::InvalidRecord(format!("{}: missing CA-125", self.patient_id)))?;
        ClinicalRecord::new(self.patient_id.clone(), age, ca125, Crs::from_grade(self.crs)?, self.split)
    }
}

pub const MANIFEST_HEADER: [&str; 7] = ["patient_id", "volume_path", "mask_path", "age", "ca125", "crs", "split"];

fn parse_opt(field: &str, name: &str, id: &str) -> Result<Option<f64>> {
    if field.is_empty() || field.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::InvalidRecord(format!("{id}: bad {name} `{field}`")))
}

/// Reads a manifest; relative paths resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csvio::reader(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidRecord(format!("manifest lacks column `{name}`")))
    };
    let cols: Vec<usize> = MANIFEST_HEADER.iter().map(|h| col(h)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for row in reader.records() {
        let row = row?;
        let f = |i: usize| row.get(cols[i]).unwrap_or("");
        let id = f(0).to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::InvalidRecord(format!("duplicate patient_id `{id}`")));
        }
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() { p } else { base.join(p) }
        };
        out.push(ManifestEntry {
            volume_path: resolve(f(1)),
            mask_path: resolve(f(2)),
            age: parse_opt(f(3), "age", &id)?,
            ca125: parse_opt(f(4), "ca125", &id)?,
            crs: f(5)
                .parse()
                .map_err(|_| Error::InvalidRecord(format!("{id}: bad crs `{}`", f(5))))?,
            split: f(6).parse()?,
            patient_id: id,
        });
    }
    Ok(out)
}

/// Writes a manifest with paths stored exactly as given.
pub fn write_manifest(path: &Path, provenance: &Provenance, entries: &[ManifestEntry]) -> Result<()> {
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                e.patient_id.clone(),
                e.volume_path.to_string_lossy().into_owned(),
                e.mask_path.to_string_lossy().into_owned(),
                e.age.map_or_else(|| "NA".into(), csvio::num),
                e.ca125.map_or_else(|| "NA".into(), csvio::num),
                e.crs.to_string(),
                e.split.to_string(),
            ]
        })
        .collect();
    csvio::write(path, provenance, &MANIFEST_HEADER, &rows)
}
