//! Small CSV helpers shared by the artifact writers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// A CSV table whose first column is a string id and the rest are numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct IdMatrix {
    pub header: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn write_id_matrix(path: &Path, header: &[String], ids: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for (id, row) in ids.iter().zip(rows) {
        let rec = std::iter::once(id.clone()).chain(row.iter().map(|v| fmt_f64(*v)));
        w.write_record(rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_id_matrix(path: &Path) -> Result<IdMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        ids.push(rec.get(0).unwrap_or("").to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|s| {
                parse_f64(s).ok_or_else(|| {
                    Error::Validation(format!("{} row {}: bad number {s:?}", path.display(), r + 2))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(IdMatrix { header, ids, rows })
}

pub fn write_labels(path: &Path, ids: &[String], labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["id", "label"]).map_err(|e| Error::csv(path, e))?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &l.to_string()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        ids.push(rec.get(0).unwrap_or("").to_string());
        let l = rec.get(1).and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| {
            Error::Validation(format!("{} row {}: bad label", path.display(), r + 2))
        })?;
        labels.push(l);
    }
    Ok((ids, labels))
}

/// Write a plain numeric table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
