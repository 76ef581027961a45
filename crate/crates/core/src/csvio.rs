//! CSV output with `#key=value` provenance comment lines ahead of the header.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered provenance stamps written as `#key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance(pub Vec<(String, String)>);

impl Provenance {
    pub fn new() -> Self {
        Provenance(Vec::new())
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.0.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Renders a table to CSV text.
pub fn render(provenance: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (k, v) in &provenance.0 {
        writeln!(out, "#{k}={v}").expect("write to Vec");
    }
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

pub fn write(path: &Path, provenance: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let bytes = render(provenance, header, rows)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reader that skips `#` comment lines.
pub fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file))
}

/// Formats an optional metric value; `None` becomes `NA`.
pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_precedes_header_and_is_skipped_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let prov = Provenance::new().with("seed", 7).with("policy", "max_f1");
        write(&path, &prov, &["a", "b"], &[vec!["1".into(), opt(None)]]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("#seed=7\n#policy=max_f1\na,b\n1,NA\n"));
        let mut r = reader(&path).unwrap();
        let rows: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(&rows[0][1], "NA");
    }
}
