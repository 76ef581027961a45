use std::path::Path;

use super::ablation::AblationRow;
use super::bootstrap::{bootstrap_metric, Metric, MetricSummary, DEFAULT_RESAMPLES};
use super::confusion::{confusion, Confusion};
use super::reliability::{reliability, ReliabilityBin};
use super::roc::{roc_auc, RocCurve};
use super::ScoredCohort;
use crate::cohort::ClinicalFeature;
use crate::csvio::{self, Provenance};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSettings {
    pub resamples: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            resamples: DEFAULT_RESAMPLES,
            bins: 10,
            seed: 0,
        }
    }
}

/// Everything reported for one cohort at one threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub cohort: String,
    /// Row label such as `tau_0.5` or the policy name.
    pub threshold_name: String,
    pub threshold: f64,
    pub n: usize,
    pub positives: usize,
    pub confusion: Confusion,
    /// Bootstrap summaries; `None` where the metric is undefined on every
    /// resample.
    pub metrics: Vec<(Metric, Option<MetricSummary>)>,
    /// `None` for a single-class cohort.
    pub roc: Option<RocCurve>,
    pub reliability: Vec<ReliabilityBin>,
}

impl EvalReport {
    pub fn metric(&self, m: Metric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|(k, _)| *k == m).and_then(|(_, s)| s.as_ref())
    }

    pub fn has_undefined(&self) -> bool {
        self.roc.is_none() || self.metrics.iter().any(|(_, s)| s.is_none())
    }
}

pub fn evaluate(
    cohort_name: &str,
    cohort: &ScoredCohort,
    threshold_name: &str,
    tau: f64,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    let (s, y) = (&cohort.scores, &cohort.labels);
    let metrics = Metric::PERFORMANCE
        .iter()
        .chain(&Metric::CONFUSION)
        .map(|&m| (m, bootstrap_metric(s, y, tau, m, settings.resamples, settings.seed).ok()))
        .collect();
    Ok(EvalReport {
        cohort: cohort_name.into(),
        threshold_name: threshold_name.into(),
        threshold: tau,
        n: cohort.len(),
        positives: cohort.positives(),
        confusion: confusion(s, y, tau),
        metrics,
        roc: roc_auc(s, y).ok(),
        reliability: reliability(s, y, settings.bins)?,
    })
}

fn summary_cells(s: Option<&MetricSummary>) -> [String; 4] {
    match s {
        Some(s) => [csvio::opt(s.point), csvio::num(s.median), csvio::num(s.ci_low), csvio::num(s.ci_high)],
        None => std::array::from_fn(|_| "NA".to_string()),
    }
}

fn header_with(prefix: &[&str], metrics: &[Metric]) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    for m in metrics {
        for suffix in ["", "_median", "_lo", "_hi"] {
            h.push(format!("{}{suffix}", m.name()));
        }
    }
    h
}

/// Writes `metrics.csv`, `confusion.csv`, `roc.csv` and `reliability.csv`.
pub fn write_reports(dir: &Path, reports: &[EvalReport], provenance: &Provenance) -> Result<()> {
    let prefix = ["cohort", "threshold_name", "threshold", "n", "positives"];
    let lead = |r: &EvalReport| {
        vec![
            r.cohort.clone(),
            r.threshold_name.clone(),
            csvio::num(r.threshold),
            r.n.to_string(),
            r.positives.to_string(),
        ]
    };

    let header = header_with(&prefix, &Metric::PERFORMANCE);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = lead(r);
            for m in Metric::PERFORMANCE {
                row.extend(summary_cells(r.metric(m)));
            }
            row
        })
        .collect();
    write(dir, "metrics.csv", provenance, &header, &rows)?;

    let mut header = header_with(&prefix, &Metric::CONFUSION);
    header.splice(prefix.len()..prefix.len(), ["tp", "tn", "fp", "fn"].map(String::from));
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let c = r.confusion;
            let mut row = lead(r);
            row.extend([c.tp, c.tn, c.fp, c.fn_].map(|v| v.to_string()));
            for m in Metric::CONFUSION {
                row.extend(summary_cells(r.metric(m)));
            }
            row
        })
        .collect();
    write(dir, "confusion.csv", provenance, &header, &rows)?;

    // curves do not depend on the threshold: one block per cohort
    let mut seen = Vec::new();
    let mut roc_rows = Vec::new();
    let mut rel_rows = Vec::new();
    for r in reports.iter().filter(|r| {
        let new = !seen.contains(&r.cohort);
        if new {
            seen.push(r.cohort.clone());
        }
        new
    }) {
        match &r.roc {
            Some(c) => roc_rows.extend(c.points.iter().map(|p| {
                vec![r.cohort.clone(), csvio::num(p.fpr), csvio::num(p.tpr), csvio::num(p.threshold)]
            })),
            None => roc_rows.push(vec![r.cohort.clone(), "NA".into(), "NA".into(), "NA".into()]),
        }
        rel_rows.extend(r.reliability.iter().map(|b| {
            vec![
                r.cohort.clone(),
                csvio::num(b.lo),
                csvio::num(b.hi),
                csvio::opt(b.mean_score),
                csvio::opt(b.frac_pos),
                b.count.to_string(),
            ]
        }));
    }
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    write(dir, "roc.csv", provenance, &s(&["cohort", "fpr", "tpr", "threshold"]), &roc_rows)?;
    write(
        dir,
        "reliability.csv",
        provenance,
        &s(&["cohort", "bin_lo", "bin_hi", "mean_score", "frac_pos", "count"]),
        &rel_rows,
    )
}

fn write(dir: &Path, name: &str, provenance: &Provenance, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    csvio::write(&dir.join(name), provenance, &h, rows)
}

pub const ABLATION_HEADER: [&str; 11] = [
    "model",
    "ct",
    "volume",
    "age",
    "ca125",
    "test_auc",
    "test_auc_lo",
    "test_auc_hi",
    "external_auc",
    "external_auc_lo",
    "external_auc_hi",
];

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow], provenance: &Provenance) -> Result<()> {
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    let cells = |s: &Option<MetricSummary>| match s {
        Some(s) => [csvio::num(s.median), csvio::num(s.ci_low), csvio::num(s.ci_high)],
        None => std::array::from_fn(|_| "NA".to_string()),
    };
    let out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let c = &r.config;
            let mut row = vec![
                c.name.clone(),
                flag(c.uses_ct()),
                flag(c.uses_volume()),
                flag(c.uses(ClinicalFeature::Age)),
                flag(c.uses(ClinicalFeature::Ca125)),
            ];
            row.extend(cells(&r.test_auc));
            row.extend(cells(&r.external_auc));
            row
        })
        .collect();
    csvio::write(path, provenance, &ABLATION_HEADER, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_cohort_marks_auc_undefined() {
        let c = ScoredCohort::anonymous(vec![0.2, 0.6, 0.9], vec![0, 0, 0]).unwrap();
        let r = evaluate("x", &c, "tau_0.5", 0.5, &EvalSettings { resamples: 100, ..Default::default() }).unwrap();
        assert!(r.roc.is_none());
        assert!(r.metric(Metric::Auc).is_none());
        assert!(r.metric(Metric::Accuracy).is_some());
        assert!(r.has_undefined());
    }

    #[test]
    fn csv_files_are_written_with_provenance() {
        let c = ScoredCohort::anonymous(vec![0.1, 0.4, 0.35, 0.8, 0.7], vec![0, 0, 1, 1, 1]).unwrap();
        let st = EvalSettings { resamples: 100, ..Default::default() };
        let reports = vec![
            evaluate("test", &c, "tau_0.5", 0.5, &st).unwrap(),
            evaluate("test", &c, "max_f1", 0.3, &st).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance::new().with("seed", 0).with("policy", "max_f1");
        write_reports(dir.path(), &reports, &prov).unwrap();
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(text.starts_with("#seed=0\n#policy=max_f1\n"));
        assert_eq!(text.lines().count(), 2 + 1 + 2);
        let roc = std::fs::read_to_string(dir.path().join("roc.csv")).unwrap();
        assert!(roc.contains("test,0,0,inf"));
    }
}
