//! Synthetic light-curve populations with heteroscedastic noise and outliers,
//! plus an irregularly sampled two-group surrogate catalog.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::catalog::{lightcurve_path, save_catalog, save_lightcurve, RawLightCurve, StarRecord};
use crate::error::{Error, Result};
use crate::io::{ensure_dir, fmt_f64, write_labels, write_table};
use crate::phase_fold::{phase_grid, write_phased_dir, PhasedCurve};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    Sine,
    Cosine,
}

/// `amplitude · wave(2π · cycles · t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signal {
    pub waveform: Waveform,
    pub amplitude: f64,
    pub cycles: f64,
}

impl Signal {
    pub fn sine(amplitude: f64) -> Self {
        Self {
            waveform: Waveform::Sine,
            amplitude,
            cycles: 1.0,
        }
    }

    pub fn cosine(amplitude: f64) -> Self {
        Self {
            waveform: Waveform::Cosine,
            amplitude,
            cycles: 1.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let x = 2.0 * PI * self.cycles * t;
        self.amplitude
            * match self.waveform {
                Waveform::Sine => x.sin(),
                Waveform::Cosine => x.cos(),
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGroup {
    pub count: usize,
    pub signal: Signal,
    /// Signal variance over noise variance.
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub groups: Vec<SimGroup>,
    pub n_points: usize,
    pub outlier_fraction: f64,
    /// Variance shares of measurement-accuracy noise and white noise.
    pub noise_split: (f64, f64),
    /// Per-point accuracy sds are drawn from `U[lo, hi] · √share · σ`.
    pub accuracy_band: (f64, f64),
    /// Factor applied to the accuracy sd of outlier points.
    pub outlier_inflation: f64,
}

impl SimScenario {
    fn with_groups(groups: Vec<SimGroup>, n_points: usize, outlier_fraction: f64) -> Self {
        Self {
            groups,
            n_points,
            outlier_fraction,
            noise_split: (0.9, 0.1),
            accuracy_band: (0.5, 1.5),
            outlier_inflation: 10.0,
        }
    }

    /// 500 sine and 500 cosine curves of unit amplitude, SNR 3, 10% outliers.
    pub fn sine_cosine() -> Self {
        Self::with_groups(
            vec![
                SimGroup { count: 500, signal: Signal::sine(1.0), snr: 3.0 },
                SimGroup { count: 500, signal: Signal::cosine(1.0), snr: 3.0 },
            ],
            250,
            0.10,
        )
    }

    /// 500 + 500 sine curves of amplitude 1 and 3, SNR 3, 10% outliers.
    pub fn two_amplitudes() -> Self {
        Self::with_groups(
            vec![
                SimGroup { count: 500, signal: Signal::sine(1.0), snr: 3.0 },
                SimGroup { count: 500, signal: Signal::sine(3.0), snr: 3.0 },
            ],
            250,
            0.10,
        )
    }

    /// Four unequal groups of `-A cos(2πt)` on 150 points with 5% outliers.
    pub fn four_depths() -> Self {
        let g = |count, a: f64, snr| SimGroup { count, signal: Signal::cosine(-a), snr };
        Self::with_groups(
            vec![g(1000, 0.05, 1.5), g(500, 0.15, 2.0), g(450, 0.30, 2.5), g(850, 0.50, 3.0)],
            150,
            0.05,
        )
    }

    /// Scenarios 1–3 by number.
    pub fn numbered(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Self::sine_cosine()),
            2 => Ok(Self::two_amplitudes()),
            3 => Ok(Self::four_depths()),
            _ => Err(Error::InvalidArgument(format!("unknown scenario {n}; expected 1, 2 or 3"))),
        }
    }

    pub fn n_curves(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.groups.iter().any(|g| g.count == 0) {
            return Err(Error::InvalidArgument("every group needs at least one curve".into()));
        }
        if self.groups.iter().any(|g| !(g.snr > 0.0)) {
            return Err(Error::InvalidArgument("SNR must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidArgument("outlier fraction must be in [0, 1)".into()));
        }
        let (a, w) = self.noise_split;
        if a < 0.0 || w < 0.0 || ((a + w) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("noise shares must be >= 0 and sum to 1".into()));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidArgument("need at least 2 points per curve".into()));
        }
        Ok(())
    }
}

/// Generated curves with the index of the group each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub curves: Vec<PhasedCurve>,
    pub labels: Vec<usize>,
    /// Sorted grid indices of each curve's outlier points.
    pub outliers: Vec<Vec<usize>>,
}

fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Independent RNG for curve `index`; identical whether curves are generated
/// serially or in parallel.
fn substream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Noise-free signal values of every group on the scenario grid.
pub fn group_signals(scenario: &SimScenario) -> Vec<Vec<f64>> {
    let t = phase_grid(scenario.n_points);
    scenario
        .groups
        .iter()
        .map(|g| t.iter().map(|&x| g.signal.eval(x)).collect())
        .collect()
}

fn noisy_curve(
    scenario: &SimScenario,
    group: &SimGroup,
    clean: &[f64],
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<usize>) {
    let n = clean.len();
    let sigma = (population_variance(clean) / group.snr).sqrt();
    let acc_sd = scenario.noise_split.0.sqrt() * sigma;
    let white_sd = scenario.noise_split.1.sqrt() * sigma;
    let (lo, hi) = scenario.accuracy_band;
    let mut sds: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi) * acc_sd).collect();
    let n_out = (scenario.outlier_fraction * n as f64).round() as usize;
    let mut outliers = sample(rng, n, n_out).into_vec();
    for &i in &outliers {
        sds[i] *= scenario.outlier_inflation;
    }
    outliers.sort_unstable();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let fluxes = clean
        .iter()
        .zip(&sds)
        .map(|(s, sd)| s + sd * std.sample(rng) + white_sd * std.sample(rng))
        .collect();
    (fluxes, outliers)
}

/// Generate every curve of `scenario`, group by group.
pub fn generate(scenario: &SimScenario, seed: u64) -> Result<SimData> {
    scenario.validate()?;
    let signals = group_signals(scenario);
    let mut jobs = Vec::with_capacity(scenario.n_curves());
    for (g, group) in scenario.groups.iter().enumerate() {
        jobs.extend(std::iter::repeat_n(g, group.count));
    }
    let width = jobs.len().to_string().len().max(4);
    let generated = crate::par::map_range(jobs.len(), |i| {
        let g = jobs[i];
        let mut rng = substream(seed, i);
        noisy_curve(scenario, &scenario.groups[g], &signals[g], &mut rng)
    });
    let mut curves = Vec::with_capacity(generated.len());
    let mut outliers = Vec::with_capacity(generated.len());
    for (i, (f, o)) in generated.into_iter().enumerate() {
        curves.push(PhasedCurve::new(format!("sim{i:0width$}"), f)?);
        outliers.push(o);
    }
    Ok(SimData { curves, labels: jobs, outliers })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMean {
    pub group: usize,
    pub n: usize,
    pub mean: Vec<f64>,
    /// Pointwise standard error; NaN for singleton groups.
    pub se: Vec<f64>,
}

/// Pointwise mean and standard-error curves per label.
pub fn group_mean_curves(curves: &[PhasedCurve], labels: &[usize]) -> Result<Vec<GroupMean>> {
    if curves.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} curves but {} labels",
            curves.len(),
            labels.len()
        )));
    }
    let len = curves.first().map_or(0, PhasedCurve::grid_len);
    if curves.iter().any(|c| c.grid_len() != len) {
        return Err(Error::InvalidArgument("curves have different grid lengths".into()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    (0..k)
        .map(|g| {
            let members: Vec<&PhasedCurve> = curves
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == g)
                .map(|(c, _)| c)
                .collect();
            if members.is_empty() {
                return Err(Error::InvalidArgument(format!("group {g} is empty")));
            }
            let n = members.len() as f64;
            let mut mean = vec![0.0; len];
            let mut se = vec![f64::NAN; len];
            for j in 0..len {
                mean[j] = members.iter().map(|c| c.fluxes[j]).sum::<f64>() / n;
                if members.len() > 1 {
                    let ss: f64 = members.iter().map(|c| (c.fluxes[j] - mean[j]).powi(2)).sum();
                    se[j] = (ss / (n - 1.0)).sqrt() / n.sqrt();
                }
            }
            Ok(GroupMean { group: g, n: members.len(), mean, se })
        })
        .collect()
}

/// Long-format CSV: group, n, phase, mean, se.
pub fn write_group_means(path: &Path, means: &[GroupMean]) -> Result<()> {
    let mut rows = Vec::new();
    for g in means {
        for ((p, m), s) in phase_grid(g.mean.len()).iter().zip(&g.mean).zip(&g.se) {
            let se = if s.is_nan() { "NA".to_string() } else { fmt_f64(*s) };
            rows.push(vec![g.group.to_string(), g.n.to_string(), fmt_f64(*p), fmt_f64(*m), se]);
        }
    }
    write_table(path, &["group", "n", "phase", "mean", "se"], &rows)
}

pub const TRUTH_CSV: &str = "truth.csv";

/// `dir/curves/` (phased format) plus `dir/truth.csv`.
pub fn write_sim_dir(dir: &Path, data: &SimData) -> Result<()> {
    ensure_dir(dir)?;
    write_phased_dir(&dir.join("curves"), &data.curves)?;
    let ids: Vec<String> = data.curves.iter().map(|c| c.star_id.clone()).collect();
    write_labels(&dir.join(TRUTH_CSV), &ids, &data.labels)
}

/// Irregularly sampled two-group eclipsing-binary-like population with a
/// matching catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateData {
    pub records: Vec<StarRecord>,
    pub curves: Vec<RawLightCurve>,
    pub labels: Vec<usize>,
}

/// Double-dip template parameters for one surrogate group.
#[derive(Debug, Clone, Copy)]
struct DipShape {
    primary: f64,
    secondary: f64,
    width: f64,
    log_period: (f64, f64),
    r_mag: (f64, f64),
    b_minus_r: (f64, f64),
    r_minus_i: (f64, f64),
}

const SURROGATE_SHAPES: [DipShape; 2] = [
    DipShape {
        primary: 0.25,
        secondary: 0.10,
        width: 0.05,
        log_period: (0.92, 0.4),
        r_mag: (18.017, 1.3),
        b_minus_r: (2.127, 0.8),
        r_minus_i: (0.864, 0.58),
    },
    DipShape {
        primary: 0.45,
        secondary: 0.40,
        width: 0.08,
        log_period: (0.34, 0.4),
        r_mag: (19.214, 1.4),
        b_minus_r: (2.421, 0.8),
        r_minus_i: (0.891, 0.6),
    },
];

fn dip(phase: f64, center: f64, width: f64) -> f64 {
    let mut d = (phase - center).abs();
    d = d.min(1.0 - d);
    (-0.5 * (d / width).powi(2)).exp()
}

/// Two-group surrogate with `counts[g]` stars in group `g` (at most two
/// groups). When `short_curve` is set, the last star of group 0 gets only 5
/// observations.
pub fn surrogate(counts: &[usize], seed: u64, short_curve: bool) -> Result<SurrogateData> {
    if counts.is_empty() || counts.len() > SURROGATE_SHAPES.len() || counts.contains(&0) {
        return Err(Error::InvalidArgument("surrogate supports one or two nonempty groups".into()));
    }
    let mut jobs = Vec::new();
    for (g, &c) in counts.iter().enumerate() {
        jobs.extend(std::iter::repeat_n(g, c));
    }
    let short_index = short_curve.then(|| counts[0] - 1);
    let noise = Normal::new(0.0, 0.02).expect("valid sd");
    let built = crate::par::map_range(jobs.len(), |i| -> Result<(StarRecord, RawLightCurve)> {
        let shape = SURROGATE_SHAPES[jobs[i]];
        let mut rng = substream(seed, i);
        let id = format!("star{i:04}");
        let period = LogNormal::new(shape.log_period.0, shape.log_period.1)
            .expect("valid lognormal")
            .sample(&mut rng);
        let start = 2_450_000.0 + rng.random_range(0.0..5.0);
        let t0 = start + rng.random_range(0.0..period);
        let normal = |(m, s): (f64, f64), rng: &mut ChaCha8Rng| Normal::new(m, s).expect("valid sd").sample(rng);
        let r_mag = normal(shape.r_mag, &mut rng);
        let b_minus_r = normal(shape.b_minus_r, &mut rng);
        let r_minus_i = normal(shape.r_minus_i, &mut rng);
        let record = StarRecord::new(id.clone(), period, t0, r_mag, b_minus_r, r_minus_i)?;

        let len = if Some(i) == short_index { 5 } else { rng.random_range(130..=264) };
        let mut times: Vec<f64> = (0..len).map(|_| start + rng.random_range(0.0..60.0)).collect();
        times.sort_by(f64::total_cmp);
        for j in 1..times.len() {
            if times[j] <= times[j - 1] {
                times[j] = times[j - 1] + 1e-6;
            }
        }
        let jitter = rng.random_range(0.85..1.15);
        let fluxes = times
            .iter()
            .map(|&t| {
                let p = crate::phase_fold::phase_of(t, period, t0);
                1.0 - jitter * (shape.primary * dip(p, 0.25, shape.width) + shape.secondary * dip(p, 0.75, shape.width))
                    + noise.sample(&mut rng)
            })
            .collect();
        Ok((record, RawLightCurve::new(id, times, fluxes)?))
    });
    let mut records = Vec::with_capacity(jobs.len());
    let mut curves = Vec::with_capacity(jobs.len());
    for b in built {
        let (r, c) = b?;
        records.push(r);
        curves.push(c);
    }
    Ok(SurrogateData { records, curves, labels: jobs })
}

/// `dir/catalog.csv`, `dir/lightcurves/<id>.csv` and `dir/truth.csv`.
pub fn write_surrogate_dir(dir: &Path, data: &SurrogateData) -> Result<()> {
    ensure_dir(dir)?;
    save_catalog(dir.join("catalog.csv"), &data.records)?;
    let lc_dir = dir.join("lightcurves");
    ensure_dir(&lc_dir)?;
    for c in &data.curves {
        save_lightcurve(lightcurve_path(&lc_dir, &c.star_id), c)?;
    }
    let ids: Vec<String> = data.records.iter().map(|r| r.star_id.clone()).collect();
    write_labels(&dir.join(TRUTH_CSV), &ids, &data.labels)
}
