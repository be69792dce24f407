//! End-to-end run: load, fold, smooth, FPCA, cluster, validate, report.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bspline::{BasisSystem, CUBIC};
use crate::catalog::{self, cluster_summary, write_summary_csv, StarRecord};
use crate::cluster::{standardize, ward_linkage};
use crate::error::{Error, Result};
use crate::fpca::{self, fpca, FpcaResult};
use crate::io::{ensure_dir, fmt_f64, read_labels, write_labels, write_table};
use crate::phase_fold::{self, phase_grid, PhasedCurve, DEFAULT_GRID_LEN};
use crate::simgen::{group_mean_curves, write_group_means};
use crate::smoother::{self, smooth_all, LambdaChoice, LambdaGrid};
use crate::validity::{self, confusion_matrix, percent_correct, ConnectivityReport, LabelMatching};

pub const PHASED_DIR: &str = "phased";
pub const SCREE_CSV: &str = "scree.csv";
pub const SCORES_CSV: &str = "scores.csv";
pub const EIGENFUNCTIONS_CSV: &str = "eigenfunctions.csv";
pub const DENDROGRAM_JSON: &str = "dendrogram.json";
pub const CONNECTIVITY_CSV: &str = "connectivity.csv";
pub const ASSIGNMENTS_CSV: &str = "assignments.csv";
pub const ASSIGNMENTS_BY_K_CSV: &str = "assignments_by_k.csv";
pub const CLUSTER_MEANS_CSV: &str = "cluster_means.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const PHOTOMETRY_CSV: &str = "photometry.csv";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const PERCENT_CORRECT_CSV: &str = "percent_correct.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Catalog CSV (id, period, t0, R, B-R, R-I). Requires `lightcurves`.
    pub catalog: Option<PathBuf>,
    /// Directory of raw `<id>.csv` light curves.
    pub lightcurves: Option<PathBuf>,
    /// Already phased curves (as written by the fold stage); skips folding.
    pub phased: Option<PathBuf>,
    /// Optional `id,label` file scored against the clustering.
    pub reference_labels: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub grid_len: usize,
    pub basis_order: usize,
    pub lambda_grid: LambdaGrid,
    /// Use this λ for every curve instead of GCV.
    pub lambda_fixed: Option<f64>,
    pub n_components: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub neighbors: usize,
    pub standardize: bool,
    pub write_phased: bool,
    /// Recorded in the manifest; the pipeline itself draws no random numbers.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            catalog: None,
            lightcurves: None,
            phased: None,
            reference_labels: None,
            output_dir: PathBuf::from("out"),
            grid_len: DEFAULT_GRID_LEN,
            basis_order: CUBIC,
            lambda_grid: LambdaGrid::default(),
            lambda_fixed: None,
            n_components: 5,
            k_min: 2,
            k_max: 6,
            neighbors: validity::DEFAULT_NEIGHBORS,
            standardize: false,
            write_phased: true,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn lambda_choice(&self) -> Result<LambdaChoice> {
        match self.lambda_fixed {
            Some(l) if l > 0.0 && l.is_finite() => Ok(LambdaChoice::Fixed(l)),
            Some(l) => Err(Error::Config(format!("fixed lambda must be positive and finite, got {l}"))),
            None => Ok(LambdaChoice::Gcv(self.lambda_grid.values().map_err(|e| Error::Config(e.to_string()))?)),
        }
    }

    /// Check parameter ranges and the input combination.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (&self.catalog, &self.lightcurves, &self.phased) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            _ => return bad("give either catalog + lightcurves, or phased".into()),
        }
        if !(3..=crate::bspline::MAX_ORDER).contains(&self.basis_order) {
            return bad(format!("basis order must be in 3..={}", crate::bspline::MAX_ORDER));
        }
        if self.grid_len < self.basis_order {
            return bad(format!("grid length {} is below the basis order", self.grid_len));
        }
        self.lambda_choice()?;
        if self.n_components == 0 {
            return bad("n_components must be at least 1".into());
        }
        if self.k_min < 2 || self.k_max < self.k_min {
            return bad(format!("k range {}..={} must satisfy 2 <= k_min <= k_max", self.k_min, self.k_max));
        }
        if self.neighbors == 0 {
            return bad("neighbors must be at least 1".into());
        }
        Ok(())
    }
}

/// Curves ready for smoothing, with whatever side information was supplied.
#[derive(Debug, Clone)]
pub struct PipelineInput {
    pub curves: Vec<PhasedCurve>,
    /// Catalog rows aligned with `curves`.
    pub records: Option<Vec<StarRecord>>,
    /// Reference classes aligned with `curves`.
    pub reference: Option<Vec<usize>>,
    pub warnings: Vec<String>,
}

fn require_nonempty_dir(dir: &Path, what: &str) -> Result<()> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("{what} {}: {e}", dir.display())))?;
    if entries.next().is_none() {
        return Err(Error::Config(format!("{what} {} is empty", dir.display())));
    }
    Ok(())
}

/// Reorder reference labels to follow `ids`.
pub fn align_labels(ids: &[String], label_ids: &[String], labels: &[usize]) -> Result<Vec<usize>> {
    let by_id: HashMap<&str, usize> = label_ids.iter().map(String::as_str).zip(labels.iter().copied()).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Validation(format!("no reference label for star {id}")))
        })
        .collect()
}

/// Read and phase the configured inputs.
pub fn load_input(config: &PipelineConfig) -> Result<PipelineInput> {
    config.validate()?;
    let mut warnings = Vec::new();
    let (curves, records) = if let Some(dir) = &config.phased {
        require_nonempty_dir(dir, "phased input directory")?;
        let curves = phase_fold::read_phased_dir(dir).map_err(|e| e.in_stage("load"))?;
        (curves, None)
    } else {
        let (cat, lc_dir) = (config.catalog.as_ref().unwrap(), config.lightcurves.as_ref().unwrap());
        require_nonempty_dir(lc_dir, "light-curve directory")?;
        let records = catalog::load_catalog(cat).map_err(|e| e.in_stage("load"))?;
        let ids: Vec<String> = records.iter().map(|r| r.star_id.clone()).collect();
        let loaded = catalog::load_lightcurves(lc_dir, &ids).map_err(|e| e.in_stage("load"))?;
        warnings.extend(loaded.warnings.iter().map(|w| format!("star {}: {}", w.star_id, w.reason)));
        let curves = phase_fold::process_all(&loaded.curves, &records, config.grid_len)
            .map_err(|e| e.in_stage("fold"))?;
        let by_id: HashMap<&str, &StarRecord> = records.iter().map(|r| (r.star_id.as_str(), r)).collect();
        let kept = curves.iter().map(|c| by_id[c.star_id.as_str()].clone()).collect();
        (curves, Some(kept))
    };
    if curves.is_empty() {
        return Err(Error::Config("no usable light curves in the input".into()));
    }
    let reference = match &config.reference_labels {
        Some(path) => {
            let (ids, labels) = read_labels(path).map_err(|e| e.in_stage("load"))?;
            let cur_ids: Vec<String> = curves.iter().map(|c| c.star_id.clone()).collect();
            Some(align_labels(&cur_ids, &ids, &labels).map_err(|e| e.in_stage("load"))?)
        }
        None => None,
    };
    Ok(PipelineInput { curves, records, reference, warnings })
}

/// Agreement with the reference at one `k` under every matching rule; `None`
/// where a rule does not apply.
#[derive(Debug, Clone, PartialEq)]
pub struct Agreement {
    pub k: usize,
    pub percent: [Option<f64>; 3],
}

impl Agreement {
    pub fn get(&self, matching: LabelMatching) -> Option<f64> {
        let i = LabelMatching::ALL.iter().position(|m| *m == matching).unwrap();
        self.percent[i]
    }
}

/// In-memory results of a run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub ids: Vec<String>,
    pub fpca: FpcaResult,
    pub connectivity: ConnectivityReport,
    /// Labels at the chosen `k`.
    pub labels: Vec<usize>,
    pub labels_by_k: Vec<(usize, Vec<usize>)>,
    pub agreement: Option<Vec<Agreement>>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn variance_explained(&self, m: usize) -> f64 {
        self.fpca.variance_explained(m)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    parallel_build: bool,
    config: toml::Value,
    n_curves: usize,
    grid_len: usize,
    n_basis: usize,
    variance_explained: f64,
    chosen_k: usize,
    warnings: &'a [String],
}

/// Run every stage on `config`'s inputs, writing artifacts to its output
/// directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary> {
    let input = load_input(config)?;
    run_stages(config, input)
}

/// Run smoothing onward on already loaded input.
pub fn run_stages(config: &PipelineConfig, input: PipelineInput) -> Result<RunSummary> {
    config.validate()?;
    let out = &config.output_dir;
    ensure_dir(out)?;
    let PipelineInput { curves, records, reference, warnings } = input;
    let ids: Vec<String> = curves.iter().map(|c| c.star_id.clone()).collect();
    let grid_len = curves[0].grid_len();

    if config.write_phased {
        phase_fold::write_phased_dir(&out.join(PHASED_DIR), &curves).map_err(|e| e.in_stage("fold"))?;
    }

    let smooth = || -> Result<_> {
        let basis = BasisSystem::uniform(grid_len, config.basis_order)?;
        let (data, fits) = smooth_all(&curves, &basis, &config.lambda_choice()?)?;
        smoother::write_functional(out, &data)?;
        smoother::write_fit_report(&out.join(smoother::FIT_REPORT_CSV), &ids, &fits)?;
        Ok(data)
    };
    let data = smooth().map_err(|e| e.in_stage("smooth"))?;

    let run_fpca = || -> Result<FpcaResult> {
        let rank = (data.len() - 1).min(data.basis.n_basis());
        let m = config.n_components.min(rank);
        if m < config.n_components {
            log::warn!("only {m} components available; requested {}", config.n_components);
        }
        let result = fpca(&data, m)?;
        fpca::write_scree(&out.join(SCREE_CSV), &result, rank)?;
        fpca::write_scores(&out.join(SCORES_CSV), &ids, &result)?;
        fpca::write_eigenfunctions(&out.join(EIGENFUNCTIONS_CSV), &data.basis, &result, &phase_grid(grid_len))?;
        Ok(result)
    };
    let fpca_result = run_fpca().map_err(|e| e.in_stage("fpca"))?;

    let mut points = fpca_result.score_rows();
    if config.standardize {
        points = standardize(&points);
    }
    let cluster = || -> Result<_> {
        let d = ward_linkage(&points)?.with_ids(ids.clone())?;
        d.save(&out.join(DENDROGRAM_JSON))?;
        Ok(d)
    };
    let dendrogram = cluster().map_err(|e| e.in_stage("cluster"))?;

    let validate = || -> Result<_> {
        let k_max = config.k_max.min(points.len() - 1);
        let report = validity::select_k(&points, &dendrogram, config.k_min..=k_max, config.neighbors)?;
        report.write_csv(&out.join(CONNECTIVITY_CSV))?;
        let labels_by_k = report
            .values
            .iter()
            .map(|&(k, _)| Ok((k, dendrogram.cut(k)?.labels)))
            .collect::<Result<Vec<_>>>()?;
        write_labels_by_k(&out.join(ASSIGNMENTS_BY_K_CSV), &ids, &labels_by_k)?;
        let labels = dendrogram.cut(report.chosen_k)?.labels;
        write_labels(&out.join(ASSIGNMENTS_CSV), &ids, &labels)?;
        Ok((report, labels, labels_by_k))
    };
    let (report, labels, labels_by_k) = validate().map_err(|e| e.in_stage("validate"))?;

    let report_stage = || -> Result<_> {
        let means = group_mean_curves(&curves, &labels)?;
        write_group_means(&out.join(CLUSTER_MEANS_CSV), &means)?;
        if let Some(records) = &records {
            write_summary_csv(out.join(SUMMARY_CSV), &cluster_summary(records, &labels)?)?;
            write_photometry(&out.join(PHOTOMETRY_CSV), records, &labels)?;
        }
        let agreement = match &reference {
            Some(truth) => {
                confusion_matrix(&labels, truth)?.write_csv(&out.join(CONFUSION_CSV), "cluster", "class")?;
                let rows = agreement_table(truth, &labels_by_k)?;
                write_agreement(&out.join(PERCENT_CORRECT_CSV), &rows)?;
                Some(rows)
            }
            None => None,
        };
        Ok(agreement)
    };
    let agreement = report_stage().map_err(|e| e.in_stage("report"))?;

    let mut config_echo = toml::Value::try_from(config).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(t) = config_echo.as_table_mut() {
        t.remove("output_dir");
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        parallel_build: crate::par::is_parallel(),
        config: config_echo,
        n_curves: ids.len(),
        grid_len,
        n_basis: data.basis.n_basis(),
        variance_explained: fpca_result.variance_explained(fpca_result.n_components()),
        chosen_k: report.chosen_k,
        warnings: &warnings,
    };
    let path = out.join(MANIFEST_JSON);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;

    Ok(RunSummary {
        ids,
        fpca: fpca_result,
        connectivity: report,
        labels,
        labels_by_k,
        agreement,
        warnings,
    })
}

pub fn agreement_table(truth: &[usize], labels_by_k: &[(usize, Vec<usize>)]) -> Result<Vec<Agreement>> {
    labels_by_k
        .iter()
        .map(|(k, labels)| {
            let mut percent = [None; 3];
            for (slot, m) in percent.iter_mut().zip(LabelMatching::ALL) {
                *slot = match percent_correct(truth, labels, m) {
                    Ok(p) => Some(p),
                    Err(Error::InvalidArgument(msg)) => {
                        log::debug!("{} matching skipped at k={k}: {msg}", m.name());
                        None
                    }
                    Err(e) => return Err(e),
                };
            }
            Ok(Agreement { k: *k, percent })
        })
        .collect()
}

fn na_or(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

fn write_agreement(path: &Path, rows: &[Agreement]) -> Result<()> {
    let mut header = vec!["k"];
    header.extend(LabelMatching::ALL.iter().map(|m| m.name()));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|a| std::iter::once(a.k.to_string()).chain(a.percent.iter().map(|p| na_or(*p))).collect())
        .collect();
    write_table(path, &header, &body)
}

fn write_labels_by_k(path: &Path, ids: &[String], labels_by_k: &[(usize, Vec<usize>)]) -> Result<()> {
    let names: Vec<String> = labels_by_k.iter().map(|(k, _)| format!("k{k}")).collect();
    let mut header = vec!["id"];
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            std::iter::once(id.clone())
                .chain(labels_by_k.iter().map(|(_, l)| l[i].to_string()))
                .collect()
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Per-star photometry with cluster labels, the data behind the histograms
/// and color-magnitude plot.
pub const PHOTOMETRY_COLUMNS: [&str; 9] = ["id", "cluster", "P", "R", "B", "I", "B-R", "R-I", "B-I"];

fn write_photometry(path: &Path, records: &[StarRecord], labels: &[usize]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .zip(labels)
        .map(|(r, l)| {
            let mut row = vec![r.star_id.clone(), l.to_string()];
            row.extend(
                [r.period, r.r_mag, r.b_mag, r.i_mag, r.b_minus_r, r.r_minus_i, r.b_minus_i]
                    .into_iter()
                    .map(fmt_f64),
            );
            row
        })
        .collect();
    write_table(path, &PHOTOMETRY_COLUMNS, &rows)
}
