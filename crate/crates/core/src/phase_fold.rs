//! Folding raw light curves onto phase and resampling them to an evenly
//! spaced phase grid with a piecewise-linear interpolant.

use std::collections::HashMap;
use std::path::Path;

use crate::catalog::{read_xy, RawLightCurve, StarRecord};
use crate::error::{Error, Result};
use crate::io::{ensure_dir, fmt_f64, write_table};
use crate::par;

/// Default number of phase grid points.
pub const DEFAULT_GRID_LEN: usize = 272;

/// A light curve sampled on `phase_grid(fluxes.len())`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasedCurve {
    pub star_id: String,
    pub fluxes: Vec<f64>,
}

impl PhasedCurve {
    pub fn new(star_id: impl Into<String>, fluxes: Vec<f64>) -> Result<Self> {
        let star_id = star_id.into();
        if fluxes.len() < 2 {
            return Err(Error::Validation(format!(
                "star {star_id}: phased curve needs at least 2 grid points"
            )));
        }
        if fluxes.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "star {star_id}: phased curve has non-finite flux"
            )));
        }
        Ok(Self { star_id, fluxes })
    }

    pub fn grid_len(&self) -> usize {
        self.fluxes.len()
    }

    pub fn phases(&self) -> Vec<f64> {
        phase_grid(self.fluxes.len())
    }
}

/// `len` evenly spaced points on `[0, 1]`, both ends included.
pub fn phase_grid(len: usize) -> Vec<f64> {
    match len {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let d = (len - 1) as f64;
            (0..len).map(|j| j as f64 / d).collect()
        }
    }
}

/// Fractional part of `(t - t0) / period`, in `[0, 1)`.
pub fn phase_of(t: f64, period: f64, t0: f64) -> f64 {
    let x = (t - t0) / period;
    let p = x - x.floor();
    if p >= 1.0 {
        0.0
    } else {
        p
    }
}

/// Fold a curve to `(phase, flux)` pairs sorted by phase. The sort is stable,
/// so points sharing a phase stay in time order.
pub fn fold(curve: &RawLightCurve, period: f64, t0: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = curve
        .times
        .iter()
        .zip(&curve.fluxes)
        .map(|(&t, &y)| (phase_of(t, period, t0), y))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Append a copy of the folded series shifted by one cycle.
pub fn extend(folded: &[(f64, f64)]) -> Vec<(f64, f64)> {
    folded
        .iter()
        .copied()
        .chain(folded.iter().map(|&(p, y)| (p + 1.0, y)))
        .collect()
}

/// Interpolate `knots` (sorted by phase) at `p`, or `None` when `p` lies
/// outside the knot range. At a repeated phase the last point wins.
fn interpolate(knots: &[(f64, f64)], p: f64) -> Option<f64> {
    let upper = knots.partition_point(|k| k.0 <= p);
    if upper == 0 {
        return None;
    }
    let (p0, y0) = knots[upper - 1];
    if p0 == p {
        return Some(y0);
    }
    let &(p1, y1) = knots.get(upper)?;
    // p0 < p < p1 here, so the segment has positive width.
    let a = (p1 - p) / (p1 - p0);
    let b = 1.0 - a;
    Some(a * y0 + b * y1)
}

/// Resample an extended phased series onto `grid_len` evenly spaced phases in
/// `[0, 1]`.
///
/// Targets left of the first knot are looked up at their periodic image
/// `p + 1`; anything still unbracketed takes the nearest knot's flux.
pub fn linear_resample(extended: &[(f64, f64)], grid_len: usize) -> Result<Vec<f64>> {
    if grid_len < 2 {
        return Err(Error::Resample(format!("grid length {grid_len} < 2")));
    }
    let distinct = extended.windows(2).filter(|w| w[1].0 != w[0].0).count() + 1;
    if extended.is_empty() || distinct < 2 {
        return Err(Error::Resample(
            "need at least 2 distinct phases to interpolate".into(),
        ));
    }
    if extended.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::Resample("knots are not sorted by phase".into()));
    }
    let first = extended[0];
    let last = extended[extended.len() - 1];
    Ok(phase_grid(grid_len)
        .into_iter()
        .map(|p| {
            interpolate(extended, p)
                .or_else(|| interpolate(extended, p + 1.0))
                .unwrap_or_else(|| {
                    if (p - first.0).abs() <= (p - last.0).abs() {
                        first.1
                    } else {
                        last.1
                    }
                })
        })
        .collect())
}

/// Fold, extend and resample one curve.
pub fn phase_curve(curve: &RawLightCurve, record: &StarRecord, grid_len: usize) -> Result<PhasedCurve> {
    let folded = fold(curve, record.period, record.t0);
    let fluxes = linear_resample(&extend(&folded), grid_len)
        .map_err(|e| e.for_star(&curve.star_id))?;
    PhasedCurve::new(curve.star_id.clone(), fluxes)
}

/// Phase every curve against its catalog record. Output follows `curves`
/// order. Records without a curve are ignored (their curve may have been
/// dropped at load time); curves without a record are an error.
pub fn process_all(
    curves: &[RawLightCurve],
    records: &[StarRecord],
    grid_len: usize,
) -> Result<Vec<PhasedCurve>> {
    let by_id: HashMap<&str, &StarRecord> =
        records.iter().map(|r| (r.star_id.as_str(), r)).collect();
    let unmatched: Vec<&str> = curves
        .iter()
        .map(|c| c.star_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !unmatched.is_empty() {
        return Err(Error::Validation(format!(
            "no catalog record for star(s): {}",
            unmatched.join(", ")
        )));
    }
    par::try_map(curves, |c| phase_curve(c, by_id[c.star_id.as_str()], grid_len))
}

pub const PHASED_INDEX: &str = "index.csv";

/// Write one `phase,flux` CSV per star plus an `index.csv` holding the order.
pub fn write_phased_dir(dir: &Path, curves: &[PhasedCurve]) -> Result<()> {
    ensure_dir(dir)?;
    for c in curves {
        let rows: Vec<Vec<String>> = c
            .phases()
            .iter()
            .zip(&c.fluxes)
            .map(|(p, y)| vec![fmt_f64(*p), fmt_f64(*y)])
            .collect();
        write_table(&dir.join(format!("{}.csv", c.star_id)), &["phase", "flux"], &rows)?;
    }
    let index: Vec<Vec<String>> = curves.iter().map(|c| vec![c.star_id.clone()]).collect();
    write_table(&dir.join(PHASED_INDEX), &["id"], &index)
}

/// Read a directory produced by [`write_phased_dir`]. All curves must share
/// the same evenly spaced grid.
pub fn read_phased_dir(dir: &Path) -> Result<Vec<PhasedCurve>> {
    let index = dir.join(PHASED_INDEX);
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&index)
        .map_err(|e| Error::csv(&index, e))?;
    let mut ids = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(&index, e))?;
        ids.push(rec.get(0).unwrap_or("").to_string());
    }
    if ids.is_empty() {
        return Err(Error::Config(format!("{} lists no curves", index.display())));
    }
    let mut out = Vec::with_capacity(ids.len());
    let mut len = None;
    for id in ids {
        let rows = read_xy(&dir.join(format!("{id}.csv")))?;
        let grid = phase_grid(rows.len());
        if rows.iter().zip(&grid).any(|(r, g)| (r.0 - g).abs() > 1e-9) {
            return Err(Error::Validation(format!(
                "star {id}: phases are not an evenly spaced [0,1] grid"
            )));
        }
        match len {
            None => len = Some(rows.len()),
            Some(l) if l != rows.len() => {
                return Err(Error::Validation(format!(
                    "star {id}: grid length {} differs from {l}",
                    rows.len()
                )))
            }
            _ => {}
        }
        out.push(PhasedCurve::new(id, rows.into_iter().map(|r| r.1).collect())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_basic_phases() {
        let c = RawLightCurve::new("a", vec![10.0, 12.5], vec![1.0, 2.0]).unwrap();
        let f = fold(&c, 1.0, 10.0);
        assert_eq!(f[0], (0.0, 1.0));
        assert!((f[1].0 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fold_matches_direct_arithmetic() {
        let c = RawLightCurve::new("a", vec![2450003.45, 2450004.0], vec![1.0, 2.0]).unwrap();
        let f = fold(&c, 2.758, 2450000.0);
        let expect = (3.45f64 / 2.758).fract();
        let got = f.iter().find(|p| p.1 == 1.0).unwrap().0;
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
        assert!((expect - 0.250906).abs() < 1e-6);
    }

    #[test]
    fn fold_negative_offsets_wrap_into_unit_interval() {
        assert!((phase_of(-0.25, 1.0, 0.0) - 0.75).abs() < 1e-15);
        assert!(phase_of(-1e-18, 1.0, 0.0) < 1.0);
    }

    #[test]
    fn extend_doubles() {
        assert_eq!(
            extend(&[(0.1, 1.0), (0.6, 2.0)]),
            vec![(0.1, 1.0), (0.6, 2.0), (1.1, 1.0), (1.6, 2.0)]
        );
        assert_eq!(extend(&[(0.3, 5.0)]), vec![(0.3, 5.0), (1.3, 5.0)]);
    }

    #[test]
    fn resample_midpoint_and_knot() {
        let knots = [(0.0, 0.0), (1.0, 2.0)];
        let v = linear_resample(&knots, 3).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn resample_interior_weights() {
        let knots = [(0.2, 1.0), (0.8, 4.0)];
        assert!((interpolate(&knots, 0.35).unwrap() - 1.75).abs() < 1e-15);
    }

    #[test]
    fn resample_uses_periodic_image_below_first_knot() {
        // First knot at 0.2; phase 0 is bracketed by its image at 1.0.
        let folded = [(0.2, 1.0), (0.7, 3.0)];
        let v = linear_resample(&extend(&folded), 11).unwrap();
        // phase 1.0 lies between (0.7, 3.0) and (1.2, 1.0): a = 0.4.
        let expect = 0.4 * 3.0 + 0.6 * 1.0;
        assert!((v[0] - expect).abs() < 1e-12);
        assert!((v[10] - expect).abs() < 1e-12);
    }

    #[test]
    fn resample_clamps_when_unbracketed() {
        let v = linear_resample(&[(0.4, 1.0), (0.5, 2.0)], 3).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 2.0]);
    }

    #[test]
    fn resample_duplicate_phase_later_point_wins() {
        let knots = [(0.0, 0.0), (0.5, 1.0), (0.5, 3.0), (1.0, 3.0)];
        let v = linear_resample(&knots, 3).unwrap();
        assert_eq!(v[1], 3.0);
    }

    #[test]
    fn resample_requires_two_distinct_phases() {
        assert!(linear_resample(&[(0.3, 1.0), (0.3, 2.0)], 5).is_err());
        assert!(linear_resample(&[], 5).is_err());
    }

    #[test]
    fn process_all_reports_unmatched_ids() {
        let c = RawLightCurve::new("ghost", vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let r = StarRecord::new("other", 1.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let err = process_all(&[c], &[r], 10).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn constant_curve_stays_constant() {
        let times: Vec<f64> = (0..37).map(|i| i as f64 * 0.731).collect();
        let c = RawLightCurve::new("k", times, vec![0.42; 37]).unwrap();
        let r = StarRecord::new("k", 2.3, 0.1, 1.0, 1.0, 1.0).unwrap();
        let p = process_all(&[c], &[r], DEFAULT_GRID_LEN).unwrap();
        assert_eq!(p[0].grid_len(), DEFAULT_GRID_LEN);
        assert!(p[0].fluxes.iter().all(|&v| (v - 0.42).abs() < 1e-15));
    }
}
