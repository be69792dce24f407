//! Star catalog and raw light-curve I/O.
//!
//! The catalog is a CSV with header columns `id, period, t0, R, B-R, R-I`;
//! the I, B-I and B columns are derived on load. Each light curve lives in its
//! own two-column `time,flux` CSV named `<id>.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64};

/// An irregularly sampled light curve for one star.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLightCurve {
    pub star_id: String,
    /// Observation epochs (HJD, days), strictly increasing.
    pub times: Vec<f64>,
    /// Relative flux at each epoch.
    pub fluxes: Vec<f64>,
}

impl RawLightCurve {
    pub fn new(star_id: impl Into<String>, times: Vec<f64>, fluxes: Vec<f64>) -> Result<Self> {
        let star_id = star_id.into();
        if times.len() != fluxes.len() {
            return Err(Error::Validation(format!(
                "star {star_id}: {} times but {} fluxes",
                times.len(),
                fluxes.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::Validation(format!(
                "star {star_id}: light curve has {} point(s), need at least 2",
                times.len()
            )));
        }
        if let Some(row) = times
            .iter()
            .zip(&fluxes)
            .position(|(t, y)| !t.is_finite() || !y.is_finite())
        {
            return Err(Error::Validation(format!(
                "star {star_id}: non-finite value at row {}",
                row + 1
            )));
        }
        if let Some(row) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "star {star_id}: times not strictly increasing at row {}",
                row + 2
            )));
        }
        Ok(Self {
            star_id,
            times,
            fluxes,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Catalog row with the derived photometric columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarRecord {
    pub star_id: String,
    /// Period in days.
    pub period: f64,
    /// Epoch of the first observed maximum brightness (HJD, days).
    pub t0: f64,
    pub r_mag: f64,
    pub b_minus_r: f64,
    pub r_minus_i: f64,
    pub i_mag: f64,
    pub b_minus_i: f64,
    pub b_mag: f64,
}

impl StarRecord {
    pub fn new(
        star_id: impl Into<String>,
        period: f64,
        t0: f64,
        r_mag: f64,
        b_minus_r: f64,
        r_minus_i: f64,
    ) -> Result<Self> {
        let star_id = star_id.into();
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::Validation(format!(
                "star {star_id}: period must be positive, got {period}"
            )));
        }
        for (name, v) in [("t0", t0), ("R", r_mag), ("B-R", b_minus_r), ("R-I", r_minus_i)] {
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "star {star_id}: column {name} is not finite"
                )));
            }
        }
        let i_mag = r_mag - r_minus_i;
        let b_minus_i = b_minus_r + r_minus_i;
        let b_mag = b_minus_i + i_mag;
        Ok(Self {
            star_id,
            period,
            t0,
            r_mag,
            b_minus_r,
            r_minus_i,
            i_mag,
            b_minus_i,
            b_mag,
        })
    }
}

const CATALOG_COLUMNS: [&str; 6] = ["id", "period", "t0", "R", "B-R", "R-I"];

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<StarRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(CATALOG_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Schema(format!("{}: missing column `{name}`", path.display()))
        })?;
    }

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let field = |i: usize| rec.get(idx[i]).unwrap_or("");
        let id = field(0).to_string();
        let num = |i: usize| {
            parse_f64(field(i)).ok_or_else(|| {
                Error::Validation(format!(
                    "{} row {}: column `{}` is not a number: {:?}",
                    path.display(),
                    row + 2,
                    CATALOG_COLUMNS[i],
                    field(i)
                ))
            })
        };
        out.push(StarRecord::new(id, num(1)?, num(2)?, num(3)?, num(4)?, num(5)?)?);
    }
    Ok(out)
}

pub fn save_catalog(path: impl AsRef<Path>, records: &[StarRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(CATALOG_COLUMNS)
        .map_err(|e| Error::csv(path, e))?;
    for r in records {
        w.write_record([
            r.star_id.clone(),
            fmt_f64(r.period),
            fmt_f64(r.t0),
            fmt_f64(r.r_mag),
            fmt_f64(r.b_minus_r),
            fmt_f64(r.r_minus_i),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A curve that was skipped rather than failing the load.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveWarning {
    pub star_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCurves {
    pub curves: Vec<RawLightCurve>,
    pub warnings: Vec<CurveWarning>,
}

pub fn lightcurve_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.csv"))
}

/// Read `(x, y)` pairs from a two-column CSV; a non-numeric first row is
/// treated as a header.
pub(crate) fn read_xy(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() < 2 {
            return Err(Error::Schema(format!(
                "{} row {}: expected 2 columns, found {}",
                path.display(),
                row + 1,
                rec.len()
            )));
        }
        match (parse_f64(&rec[0]), parse_f64(&rec[1])) {
            (Some(x), Some(y)) => out.push((x, y)),
            _ if row == 0 => continue,
            _ => {
                return Err(Error::Validation(format!(
                    "{} row {}: non-numeric value",
                    path.display(),
                    row + 1
                )))
            }
        }
    }
    Ok(out)
}

pub fn load_lightcurve(path: impl AsRef<Path>, id: &str) -> Result<RawLightCurve> {
    let rows = read_xy(path.as_ref())?;
    let (times, fluxes) = rows.into_iter().unzip();
    RawLightCurve::new(id, times, fluxes)
}

/// Load `<dir>/<id>.csv` for each id, in id order. Curves with fewer than two
/// points are skipped with a warning; any other defect is an error.
pub fn load_lightcurves(dir: impl AsRef<Path>, ids: &[String]) -> Result<LoadedCurves> {
    let dir = dir.as_ref();
    let mut out = LoadedCurves::default();
    for id in ids {
        let path = lightcurve_path(dir, id);
        let rows = read_xy(&path)?;
        if rows.len() < 2 {
            log::warn!("star {id}: skipping light curve with {} point(s)", rows.len());
            out.warnings.push(CurveWarning {
                star_id: id.clone(),
                reason: format!("light curve has {} point(s), need at least 2", rows.len()),
            });
            continue;
        }
        let (times, fluxes) = rows.into_iter().unzip();
        out.curves.push(RawLightCurve::new(id.clone(), times, fluxes).map_err(|e| e.for_star(id))?);
    }
    Ok(out)
}

pub fn save_lightcurve(path: impl AsRef<Path>, curve: &RawLightCurve) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["time", "flux"])
        .map_err(|e| Error::csv(path, e))?;
    for (t, y) in curve.times.iter().zip(&curve.fluxes) {
        w.write_record([fmt_f64(*t), fmt_f64(*y)])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Mean and standard error of one variable within one cluster. The standard
/// error is `None` for singleton clusters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: Option<f64>,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = (values.len() > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1.0)).sqrt() / n.sqrt()
        });
        Self { mean, se }
    }
}

/// Column order of the per-cluster summary.
pub const SUMMARY_VARIABLES: [&str; 6] = ["P", "R", "B", "I", "B-I", "R-I"];

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub n: usize,
    /// Indexed as [`SUMMARY_VARIABLES`].
    pub stats: [MeanSe; 6],
}

pub fn cluster_summary(records: &[StarRecord], labels: &[usize]) -> Result<Vec<ClusterSummary>> {
    if records.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} records but {} labels",
            records.len(),
            labels.len()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<&StarRecord> = records
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(r, _)| r)
            .collect();
        if members.is_empty() {
            return Err(Error::InvalidArgument(format!("cluster {c} is empty")));
        }
        let col = |f: fn(&StarRecord) -> f64| {
            MeanSe::of(&members.iter().map(|r| f(r)).collect::<Vec<_>>())
        };
        out.push(ClusterSummary {
            cluster: c,
            n: members.len(),
            stats: [
                col(|r| r.period),
                col(|r| r.r_mag),
                col(|r| r.b_mag),
                col(|r| r.i_mag),
                col(|r| r.b_minus_i),
                col(|r| r.r_minus_i),
            ],
        });
    }
    Ok(out)
}

pub fn write_summary_csv(path: impl AsRef<Path>, summary: &[ClusterSummary]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["cluster".to_string(), "n".to_string()];
    for v in SUMMARY_VARIABLES {
        header.push(format!("{v}_mean"));
        header.push(format!("{v}_se"));
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for s in summary {
        let mut row = vec![s.cluster.to_string(), s.n.to_string()];
        for st in &s.stats {
            row.push(fmt_f64(st.mean));
            row.push(st.se.map_or_else(|| "NA".to_string(), fmt_f64));
        }
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
