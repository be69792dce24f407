//! SVG renderings of run artifacts. The CSV files remain the record; these
//! are for looking at.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{ensure_dir, parse_f64};
use crate::pipeline::{ASSIGNMENTS_CSV, CLUSTER_MEANS_CSV, PHOTOMETRY_CSV, SCORES_CSV};

pub const PLOTS_DIR: &str = "plots";

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self { body: String::new(), width, height }
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, style: &str) {
        let _ = writeln!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" {style}/>"#);
    }

    fn path(&mut self, pts: &[(f64, f64)], closed: bool, style: &str) {
        if pts.is_empty() {
            return;
        }
        let mut d = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
        }
        if closed {
            d.push('Z');
        }
        let _ = writeln!(self.body, r#"<path d="{}" {style}/>"#, d.trim_end());
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}" fill-opacity="0.6"/>"#
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// A plotting area mapping data coordinates to pixels.
#[derive(Clone, Copy)]
struct Panel {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
    y_down: bool,
}

impl Panel {
    fn px(&self, v: f64) -> f64 {
        self.x + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        let f = (v - self.yr.0) / (self.yr.1 - self.yr.0);
        if self.y_down {
            self.y + f * self.h
        } else {
            self.y + (1.0 - f) * self.h
        }
    }

    fn frame(&self, svg: &mut Svg, title: &str, ticks: bool) {
        svg.rect(self.x, self.y, self.w, self.h, r#"fill="none" stroke="black" stroke-width="0.8""#);
        if !title.is_empty() {
            svg.text(self.x + self.w / 2.0, self.y - 5.0, 11.0, "middle", title);
        }
        if ticks {
            svg.text(self.x, self.y + self.h + 12.0, 9.0, "start", &short(self.xr.0));
            svg.text(self.x + self.w, self.y + self.h + 12.0, 9.0, "end", &short(self.xr.1));
            let (lo, hi) = if self.y_down { (self.yr.1, self.yr.0) } else { self.yr };
            svg.text(self.x - 3.0, self.y + self.h, 9.0, "end", &short(lo));
            svg.text(self.x - 3.0, self.y + 9.0, 9.0, "end", &short(hi));
        }
    }
}

fn short(v: f64) -> String {
    format!("{v:.3}")
}

/// Padded finite range of `values`; a unit interval around a constant.
fn range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_path(path).map_err(|e| Error::csv(path, e))?;
        let header = rdr.headers().map_err(|e| Error::csv(path, e))?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()).map_err(|e| Error::csv(path, e)))
            .collect::<Result<_>>()?;
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name}")))
    }

    fn num(&self, row: usize, col: usize) -> f64 {
        parse_f64(&self.rows[row][col]).unwrap_or(f64::NAN)
    }
}

/// Mean curves with ±1 standard-error ribbons, one color per group.
pub fn mean_curves_svg(path: &Path) -> Result<String> {
    let t = Table::read(path)?;
    let (g, ph, mean, se) = (t.col("group")?, t.col("phase")?, t.col("mean")?, t.col("se")?);
    let mut groups: BTreeMap<usize, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for r in 0..t.rows.len() {
        let id = t.rows[r][g].parse().map_err(|_| Error::Schema("bad group label".into()))?;
        let s = t.num(r, se);
        groups.entry(id).or_default().push((t.num(r, ph), t.num(r, mean), if s.is_nan() { 0.0 } else { s }));
    }
    let xr = range(groups.values().flatten().map(|p| p.0));
    let yr = range(groups.values().flatten().flat_map(|p| [p.1 - p.2, p.1 + p.2]));
    let mut svg = Svg::new(640.0, 420.0);
    let panel = Panel { x: 60.0, y: 30.0, w: 540.0, h: 340.0, xr, yr, y_down: false };
    panel.frame(&mut svg, "Mean curves ± 1 se", true);
    svg.text(330.0, 408.0, 11.0, "middle", "phase");
    for (i, (id, pts)) in groups.iter().enumerate() {
        let upper = pts.iter().map(|p| (panel.px(p.0), panel.py(p.1 + p.2)));
        let lower = pts.iter().rev().map(|p| (panel.px(p.0), panel.py(p.1 - p.2)));
        let ribbon: Vec<_> = upper.chain(lower).collect();
        svg.path(&ribbon, true, &format!(r#"fill="{}" fill-opacity="0.25" stroke="none""#, color(i)));
        let line: Vec<_> = pts.iter().map(|p| (panel.px(p.0), panel.py(p.1))).collect();
        svg.path(&line, false, &format!(r#"fill="none" stroke="{}" stroke-width="1.5""#, color(i)));
        svg.text(612.0, 45.0 + 14.0 * i as f64, 10.0, "start", &format!("{id}"));
    }
    Ok(svg.finish())
}

fn labels_by_id(path: &Path) -> Result<BTreeMap<String, usize>> {
    let (ids, labels) = crate::io::read_labels(path)?;
    Ok(ids.into_iter().zip(labels).collect())
}

/// Pairwise scatter matrix of all score columns, colored by cluster; the
/// diagonal holds the component names.
pub fn score_matrix_svg(scores: &Path, assignments: &Path) -> Result<String> {
    let m = crate::io::read_id_matrix(scores)?;
    let labels = labels_by_id(assignments)?;
    let n_comp = m.header.len() - 1;
    let cell = 120.0;
    let margin = 40.0;
    let size = margin * 2.0 + cell * n_comp as f64;
    let mut svg = Svg::new(size, size);
    let ranges: Vec<(f64, f64)> = (0..n_comp).map(|c| range(m.rows.iter().map(|r| r[c]))).collect();
    for row in 0..n_comp {
        for col in 0..n_comp {
            let panel = Panel {
                x: margin + col as f64 * cell + 4.0,
                y: margin + row as f64 * cell + 4.0,
                w: cell - 8.0,
                h: cell - 8.0,
                xr: ranges[col],
                yr: ranges[row],
                y_down: false,
            };
            panel.frame(&mut svg, "", false);
            if row == col {
                svg.text(panel.x + panel.w / 2.0, panel.y + panel.h / 2.0, 12.0, "middle", &m.header[col + 1]);
                continue;
            }
            for (id, r) in m.ids.iter().zip(&m.rows) {
                let l = labels.get(id).copied().unwrap_or(0);
                svg.circle(panel.px(r[col]), panel.py(r[row]), 1.2, color(l));
            }
        }
    }
    Ok(svg.finish())
}

fn photometry(path: &Path) -> Result<(Table, usize)> {
    let t = Table::read(path)?;
    let c = t.col("cluster")?;
    Ok((t, c))
}

fn cluster_of(t: &Table, c: usize, r: usize) -> usize {
    t.rows[r][c].parse().unwrap_or(0)
}

/// Per-cluster step histograms of the magnitudes and colors.
pub fn histograms_svg(path: &Path) -> Result<String> {
    const VARS: [&str; 5] = ["R", "B", "I", "B-R", "R-I"];
    const BINS: usize = 20;
    let (t, c) = photometry(path)?;
    let k = (0..t.rows.len()).map(|r| cluster_of(&t, c, r) + 1).max().unwrap_or(1);
    let mut svg = Svg::new(5.0 * 200.0 + 40.0, 260.0);
    for (v, name) in VARS.iter().enumerate() {
        let col = t.col(name)?;
        let xr = range((0..t.rows.len()).map(|r| t.num(r, col)));
        let width = (xr.1 - xr.0) / BINS as f64;
        let mut counts = vec![vec![0usize; BINS]; k];
        for r in 0..t.rows.len() {
            let x = t.num(r, col);
            if x.is_finite() {
                let b = (((x - xr.0) / width) as usize).min(BINS - 1);
                counts[cluster_of(&t, c, r)][b] += 1;
            }
        }
        let top = counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
        let panel = Panel { x: 40.0 + 200.0 * v as f64, y: 30.0, w: 180.0, h: 190.0, xr, yr: (0.0, top), y_down: false };
        panel.frame(&mut svg, name, true);
        for (cl, hist) in counts.iter().enumerate() {
            let mut pts = vec![(panel.px(xr.0), panel.py(0.0))];
            for (b, &n) in hist.iter().enumerate() {
                let (lo, hi) = (xr.0 + b as f64 * width, xr.0 + (b + 1) as f64 * width);
                pts.push((panel.px(lo), panel.py(n as f64)));
                pts.push((panel.px(hi), panel.py(n as f64)));
            }
            pts.push((panel.px(xr.1), panel.py(0.0)));
            svg.path(&pts, false, &format!(r#"fill="none" stroke="{}" stroke-width="1.2""#, color(cl)));
        }
    }
    Ok(svg.finish())
}

/// Color–magnitude diagram: B−R against R with magnitudes increasing
/// downward.
pub fn cmd_svg(path: &Path) -> Result<String> {
    let (t, c) = photometry(path)?;
    let (bx, ry) = (t.col("B-R")?, t.col("R")?);
    let xr = range((0..t.rows.len()).map(|r| t.num(r, bx)));
    let yr = range((0..t.rows.len()).map(|r| t.num(r, ry)));
    let mut svg = Svg::new(520.0, 520.0);
    let panel = Panel { x: 60.0, y: 30.0, w: 420.0, h: 420.0, xr, yr, y_down: true };
    panel.frame(&mut svg, "Color–magnitude diagram", true);
    svg.text(270.0, 495.0, 11.0, "middle", "B-R");
    svg.text(20.0, 240.0, 11.0, "middle", "R");
    for r in 0..t.rows.len() {
        let (x, y) = (t.num(r, bx), t.num(r, ry));
        if x.is_finite() && y.is_finite() {
            svg.circle(panel.px(x), panel.py(y), 1.5, color(cluster_of(&t, c, r)));
        }
    }
    Ok(svg.finish())
}

/// Render every plot whose inputs exist in `run_dir` into `run_dir/plots`.
/// Missing artifacts are skipped with a warning. Returns the files written.
pub fn emit_plots(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let out = run_dir.join(PLOTS_DIR);
    let has = |f: &str| {
        let ok = run_dir.join(f).is_file();
        if !ok {
            log::warn!("{f} not found in {}; skipping its plots", run_dir.display());
        }
        ok
    };
    type Job<'a> = Box<dyn Fn() -> Result<String> + 'a>;
    let mut jobs: Vec<(&str, Job)> = Vec::new();
    if has(CLUSTER_MEANS_CSV) {
        jobs.push(("cluster_means.svg", Box::new(|| mean_curves_svg(&run_dir.join(CLUSTER_MEANS_CSV)))));
    }
    if has(SCORES_CSV) && has(ASSIGNMENTS_CSV) {
        jobs.push((
            "scores_matrix.svg",
            Box::new(|| score_matrix_svg(&run_dir.join(SCORES_CSV), &run_dir.join(ASSIGNMENTS_CSV))),
        ));
    }
    if has(PHOTOMETRY_CSV) {
        jobs.push(("histograms.svg", Box::new(|| histograms_svg(&run_dir.join(PHOTOMETRY_CSV)))));
        jobs.push(("color_magnitude.svg", Box::new(|| cmd_svg(&run_dir.join(PHOTOMETRY_CSV)))));
    }
    let mut written = Vec::new();
    if jobs.is_empty() {
        return Ok(written);
    }
    ensure_dir(&out)?;
    for (name, render) in jobs {
        let path = out.join(name);
        std::fs::write(&path, render()?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
