use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lcfpca::catalog::{load_catalog, load_lightcurves};
use lcfpca::cluster::{standardize, ward_linkage, Dendrogram};
use lcfpca::io::{ensure_dir, read_id_matrix, read_labels, write_labels};
use lcfpca::phase_fold::{self, phase_grid, DEFAULT_GRID_LEN};
use lcfpca::pipeline::{self as pl, PipelineConfig};
use lcfpca::simgen::{self, SimScenario};
use lcfpca::smoother;
use lcfpca::validity::{self, confusion_matrix};
use lcfpca::{fpca, BasisSystem, Error, Result};

#[derive(Parser)]
#[command(name = "lcfpca", version, about = "Cluster periodic light curves through functional PCA")]
struct Cli {
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Phase-fold raw light curves onto an even grid.
    Fold {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        lightcurves: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GRID_LEN)]
        grid_len: usize,
    },
    /// Fit penalized B-splines to phased curves.
    Smooth {
        #[arg(long)]
        phased: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[command(flatten)]
        lambda: LambdaArgs,
    },
    /// Functional PCA of smoothed curves.
    Fpca {
        /// Directory holding coefficients.csv and basis.json.
        #[arg(long)]
        smooth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        components: usize,
    },
    /// Ward clustering of FPC scores.
    Cluster {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        standardize: bool,
    },
    /// Choose k by connectivity and write assignments.
    Validate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        dendrogram: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 6)]
        k_max: usize,
        #[arg(long, default_value_t = validity::DEFAULT_NEIGHBORS)]
        neighbors: usize,
        /// Must match the flag given to `cluster`.
        #[arg(long)]
        standardize: bool,
        /// Reference `id,label` file for confusion and agreement tables.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Generate a synthetic population.
    Simulate {
        /// 1, 2, 3 or `surrogate`.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage.
    Pipeline(PipelineArgs),
    /// Render SVG plots from a run directory.
    Plot {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Args, Clone)]
struct LambdaArgs {
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    lambda_points: Option<usize>,
    /// Shared λ for every curve instead of GCV.
    #[arg(long = "lambda", conflicts_with_all = ["lambda_min", "lambda_max", "lambda_points"])]
    fixed: Option<f64>,
}

impl LambdaArgs {
    fn apply(&self, config: &mut PipelineConfig) {
        if let Some(v) = self.lambda_min {
            config.lambda_grid.min = v;
        }
        if let Some(v) = self.lambda_max {
            config.lambda_grid.max = v;
        }
        if let Some(v) = self.lambda_points {
            config.lambda_grid.points = v;
        }
        if self.fixed.is_some() {
            config.lambda_fixed = self.fixed;
        }
    }
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML config; flags given alongside override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    lightcurves: Option<PathBuf>,
    #[arg(long)]
    phased: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid_len: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[command(flatten)]
    lambda: LambdaArgs,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    standardize: bool,
    /// Do not write the phased/ directory.
    #[arg(long)]
    no_phased_output: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Also render SVG plots.
    #[arg(long)]
    plots: bool,
    /// Write the effective config to this path and continue.
    #[arg(long)]
    save_config: Option<PathBuf>,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident = $arg:ident),*) => {$(
                if let Some(v) = &self.$arg {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(catalog = catalog, lightcurves = lightcurves, phased = phased, reference_labels = reference);
        set!(output_dir = out, grid_len = grid_len, basis_order = order, n_components = components);
        set!(k_min = k_min, k_max = k_max, neighbors = neighbors, seed = seed);
        self.lambda.apply(&mut c);
        c.standardize |= self.standardize;
        c.write_phased &= !self.no_phased_output;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        lcfpca::par::init_threads(n);
    }
    match cli.command {
        Command::Fold { catalog, lightcurves, out, grid_len } => {
            let records = load_catalog(&catalog)?;
            let ids: Vec<String> = records.iter().map(|r| r.star_id.clone()).collect();
            let loaded = load_lightcurves(&lightcurves, &ids)?;
            let phased = phase_fold::process_all(&loaded.curves, &records, grid_len)
                .map_err(|e| stage("fold", e))?;
            phase_fold::write_phased_dir(&out, &phased)?;
            log::info!("folded {} curves", phased.len());
        }
        Command::Smooth { phased, out, order, lambda } => {
            let curves = phase_fold::read_phased_dir(&phased)?;
            let first = curves.first().ok_or_else(|| Error::Config("no phased curves".into()))?;
            let mut c = PipelineConfig { basis_order: order, ..Default::default() };
            lambda.apply(&mut c);
            let basis = BasisSystem::uniform(first.grid_len(), order)?;
            let (data, fits) = smoother::smooth_all(&curves, &basis, &c.lambda_choice()?)
                .map_err(|e| stage("smooth", e))?;
            smoother::write_functional(&out, &data)?;
            smoother::write_fit_report(&out.join(smoother::FIT_REPORT_CSV), &data.ids, &fits)?;
        }
        Command::Fpca { smooth, out, components } => {
            let data = smoother::read_functional(&smooth)?;
            let rank = data.len().saturating_sub(1).min(data.basis.n_basis());
            let result = fpca::fpca(&data, components).map_err(|e| stage("fpca", e))?;
            ensure_dir(&out)?;
            fpca::write_scree(&out.join(pl::SCREE_CSV), &result, rank)?;
            fpca::write_scores(&out.join(pl::SCORES_CSV), &data.ids, &result)?;
            let phases = phase_grid(data.basis.breakpoints().len());
            fpca::write_eigenfunctions(&out.join(pl::EIGENFUNCTIONS_CSV), &data.basis, &result, &phases)?;
        }
        Command::Cluster { scores, out, standardize: std } => {
            let (ids, points) = load_points(&scores, std)?;
            let d = ward_linkage(&points).map_err(|e| stage("cluster", e))?.with_ids(ids)?;
            ensure_dir(&out)?;
            d.save(&out.join(pl::DENDROGRAM_JSON))?;
        }
        Command::Validate { scores, dendrogram, out, k_min, k_max, neighbors, standardize: std, reference } => {
            let (ids, points) = load_points(&scores, std)?;
            let d = Dendrogram::load(&dendrogram)?;
            if d.leaf_ids != ids {
                return Err(Error::Validation("dendrogram leaves do not match the score ids".into()));
            }
            ensure_dir(&out)?;
            let report = validity::select_k(&points, &d, k_min..=k_max, neighbors).map_err(|e| stage("validate", e))?;
            report.write_csv(&out.join(pl::CONNECTIVITY_CSV))?;
            let labels = d.cut(report.chosen_k)?.labels;
            write_labels(&out.join(pl::ASSIGNMENTS_CSV), &ids, &labels)?;
            println!("chosen k = {}", report.chosen_k);
            if let Some(path) = reference {
                let (ref_ids, ref_labels) = read_labels(&path)?;
                let truth = pl::align_labels(&ids, &ref_ids, &ref_labels)?;
                confusion_matrix(&labels, &truth)?.write_csv(&out.join(pl::CONFUSION_CSV), "cluster", "class")?;
            }
        }
        Command::Simulate { scenario, seed, out } => {
            if scenario == "surrogate" {
                let data = simgen::surrogate(&[833, 485], seed, true)?;
                simgen::write_surrogate_dir(&out, &data)?;
            } else {
                let n: u8 = scenario
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("unknown scenario {scenario:?}")))?;
                let s = SimScenario::numbered(n)?;
                let data = simgen::generate(&s, seed)?;
                simgen::write_sim_dir(&out, &data)?;
                let means = simgen::group_mean_curves(&data.curves, &data.labels)?;
                simgen::write_group_means(&out.join("group_means.csv"), &means)?;
            }
        }
        Command::Pipeline(args) => {
            let config = args.config()?;
            if let Some(p) = &args.save_config {
                config.save(p)?;
            }
            let summary = pl::run_pipeline(&config)?;
            println!(
                "{} curves; {} components explain {:.3}%; chosen k = {}",
                summary.ids.len(),
                summary.fpca.n_components(),
                100.0 * summary.variance_explained(summary.fpca.n_components()),
                summary.connectivity.chosen_k
            );
            if args.plots {
                lcfpca::plot::emit_plots(&config.output_dir)?;
            }
        }
        Command::Plot { run } => {
            let written = lcfpca::plot::emit_plots(&run)?;
            if written.is_empty() {
                log::warn!("no plottable artifacts in {}", run.display());
            }
        }
    }
    Ok(())
}

fn stage(name: &'static str, e: Error) -> Error {
    Error::Stage { stage: name, source: Box::new(e) }
}

fn load_points(scores: &Path, std: bool) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let m = read_id_matrix(scores)?;
    let points = if std { standardize(&m.rows) } else { m.rows };
    Ok((m.ids, points))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
