//! Acceptance suite: every criterion prints one PASS/FAIL line with the
//! measured values; the process exits nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{dense_fit, dense_fpca_oracle, exhaustive_ward, Lcg};
use lcfpca::bspline::{BasisSystem, CUBIC};
use lcfpca::cluster::ward_linkage;
use lcfpca::phase_fold::{phase_grid, PhasedCurve};
use lcfpca::pipeline::{self as pl, run_pipeline, run_stages, PipelineConfig, PipelineInput, RunSummary};
use lcfpca::simgen::{self, SimScenario};
use lcfpca::smoother::{smooth_all, LambdaChoice, LambdaGrid, Smoother};
use lcfpca::validity::{connectivity, LabelMatching};
use lcfpca::fpca;
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run_scenario(scenario: &SimScenario, seed: u64, n_components: usize) -> (RunSummary, Duration) {
    let start = Instant::now();
    let data = simgen::generate(scenario, seed).unwrap();
    let out = tempfile::tempdir().unwrap();
    let config = PipelineConfig {
        phased: Some("simulated".into()),
        output_dir: out.path().to_path_buf(),
        n_components,
        neighbors: 10,
        write_phased: false,
        seed,
        ..Default::default()
    };
    let input = PipelineInput { curves: data.curves, records: None, reference: Some(data.labels), warnings: vec![] };
    let summary = run_stages(&config, input).unwrap();
    (summary, start.elapsed())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn direct(summary: &RunSummary, k: usize) -> f64 {
    let rows = summary.agreement.as_ref().unwrap();
    rows.iter().find(|a| a.k == k).unwrap().get(LabelMatching::Direct).unwrap()
}

fn conn(summary: &RunSummary, k: usize) -> f64 {
    summary.connectivity.values.iter().find(|(kk, _)| *kk == k).unwrap().1
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

struct ScenarioRuns {
    runs: Vec<RunSummary>,
    slowest: Duration,
}

fn scenario_runs(n: u8) -> ScenarioRuns {
    let s = SimScenario::numbered(n).unwrap();
    let mut runs = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 0..SEEDS {
        let (r, t) = run_scenario(&s, seed, 2);
        slowest = slowest.max(t);
        runs.push(r);
    }
    ScenarioRuns { runs, slowest }
}

fn variance_explained_pct(runs: &ScenarioRuns) -> Vec<f64> {
    runs.runs.iter().map(|r| 100.0 * r.variance_explained(2)).collect()
}

fn criterion_1(s1: &ScenarioRuns) -> Outcome {
    let mut bad = Vec::new();
    for (seed, r) in s1.runs.iter().enumerate() {
        let zero_at_2 = conn(r, 2) == 0.0;
        let positive_after = (3..=6).all(|k| conn(r, k) > 0.0);
        let correct = direct(r, 2) == 100.0;
        if !(zero_at_2 && positive_after && correct) {
            bad.push(format!("seed {seed}: conn {:?} pc2 {:.3}", r.connectivity.values, direct(r, 2)));
        }
    }
    let c = &s1.runs[0];
    let profile: Vec<f64> = c.connectivity.values.iter().map(|v| v.1).collect();
    let fast = s1.slowest < Duration::from_secs(120);
    outcome(
        bad.is_empty() && fast,
        format!(
            "scenario 1, M=2, J=10: connectivity(seed 0) k=2..6 {}; 100% correct at k=2 in {}/{SEEDS} seeds; slowest run {:.2?}{}",
            fmt_list(&profile),
            SEEDS as usize - bad.len(),
            s1.slowest,
            if bad.is_empty() { String::new() } else { format!("; failures: {}", bad.join("; ")) }
        ),
    )
}

fn criterion_range(name: &str, ve: &[f64], lo: f64, hi: f64) -> Outcome {
    let m = mean(ve);
    outcome(
        (lo..=hi).contains(&m),
        format!("{name}: mean first-2-FPC variance {m:.3}% over {SEEDS} seeds (accept {lo}-{hi}%); per seed {}", fmt_list(ve)),
    )
}

fn criterion_3(s2: &ScenarioRuns) -> Outcome {
    let conn2: Vec<f64> = s2.runs.iter().map(|r| conn(r, 2)).collect();
    let pc2: Vec<f64> = s2.runs.iter().map(|r| direct(r, 2)).collect();
    let ve = variance_explained_pct(s2);
    let clustering = conn2.iter().all(|c| *c == 0.0) && pc2.iter().all(|p| *p == 100.0);
    let range = criterion_range("variance", &ve, 58.0, 75.0);
    outcome(
        clustering && range.pass,
        format!(
            "scenario 2: connectivity at k=2 per seed {}; % correct at k=2 {}; {}",
            fmt_list(&conn2),
            fmt_list(&pc2),
            range.detail
        ),
    )
}

fn criterion_4(s3: &ScenarioRuns) -> Outcome {
    let forced = 100.0 * 1000.0 / 2800.0;
    let per_k = |k: usize| -> Vec<f64> { s3.runs.iter().map(|r| direct(r, k)).collect() };
    let (k2, k3, k4, k5, k6) = (per_k(2), per_k(3), per_k(4), per_k(5), per_k(6));
    let exact = |v: &[f64]| v.iter().all(|p| (p - forced).abs() < 1e-9);
    let checks = [
        ("k=2 == 35.714", exact(&k2)),
        ("k=3 == 35.714", exact(&k3)),
        ("k=4 >= 95", mean(&k4) >= 95.0),
        ("k=5 within 87.071±10", (mean(&k5) - 87.071).abs() <= 10.0),
        ("k=6 within 75.607±10", (mean(&k6) - 75.607).abs() <= 10.0),
    ];
    let ve = variance_explained_pct(s3);
    let range = criterion_range("variance", &ve, 62.0, 78.0);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty() && range.pass,
        format!(
            "scenario 3 (direct label matching): mean % correct k=2..6 [{:.3}, {:.3}, {:.3}, {:.3}, {:.3}]; k=2 per seed {}; k=3 per seed {}; k=5 per seed {}; unmet: {:?}; {}",
            mean(&k2), mean(&k3), mean(&k4), mean(&k5), mean(&k6),
            fmt_list(&k2), fmt_list(&k3), fmt_list(&k5), failed, range.detail
        ),
    )
}

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sur = simgen::surrogate(&[833, 485], 2024, true).unwrap();
    simgen::write_surrogate_dir(dir.path(), &sur).unwrap();
    let config = PipelineConfig {
        catalog: Some(dir.path().join("catalog.csv")),
        lightcurves: Some(dir.path().join("lightcurves")),
        reference_labels: Some(dir.path().join(simgen::TRUTH_CSV)),
        output_dir: dir.path().join("run"),
        n_components: 5,
        ..Default::default()
    };
    let summary = match run_pipeline(&config) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("surrogate run failed: {e}")),
    };
    let artifacts = [pl::CONNECTIVITY_CSV, pl::CONFUSION_CSV, pl::SUMMARY_CSV, pl::ASSIGNMENTS_CSV, pl::SCORES_CSV, pl::MANIFEST_JSON];
    let missing: Vec<&str> = artifacts.iter().copied().filter(|f| !config.output_dir.join(f).is_file()).collect();
    let sizes: Vec<usize> = (0..summary.connectivity.chosen_k)
        .map(|c| summary.labels.iter().filter(|&&l| l == c).count())
        .collect();
    outcome(
        summary.ids.len() == 1318 && missing.is_empty() && summary.connectivity.chosen_k == 2,
        format!(
            "1318-curve two-group surrogate: {} curves, chosen k = {}, cluster sizes {:?}, 5-FPC variance {:.3}%, connectivity {:?}, missing artifacts {:?}",
            summary.ids.len(),
            summary.connectivity.chosen_k,
            sizes,
            100.0 * summary.variance_explained(5),
            summary.connectivity.values.iter().map(|(k, c)| (*k, (c * 1000.0).round() / 1000.0)).collect::<Vec<_>>(),
            missing
        ),
    )
}

fn numerical_checks() -> Vec<(&'static str, bool, String)> {
    let mut out = Vec::new();

    let basis = BasisSystem::uniform(272, CUBIC).unwrap();
    let ts: Vec<f64> = (0..=4000).map(|i| i as f64 / 4000.0).collect();
    let phi = basis.eval_basis(&ts).unwrap();
    let pou = (0..ts.len()).map(|r| (phi.row(r).sum() - 1.0).abs()).fold(0.0, f64::max);
    out.push(("partition of unity", pou <= 1e-10, format!("{pou:.1e}")));

    let mut ev: Vec<f64> = basis.penalty().clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let top = ev.last().unwrap().abs();
    let null_ok = ev[0].abs() / top < 1e-10 && ev[1].abs() / top < 1e-10 && ev[2] / top > 1e-10;
    out.push(("penalty null space = affine", null_ok, format!("{:.1e}, {:.1e}, next {:.1e}", ev[0] / top, ev[1] / top, ev[2] / top)));

    let n = 120;
    let b = BasisSystem::uniform(n, CUBIC).unwrap();
    let s = Smoother::on_breakpoints(&b).unwrap();
    let mut rng = Lcg(31);
    let y: Vec<f64> = phase_grid(n).iter().map(|t| (2.0 * PI * t).sin() + 0.3 * rng.normal()).collect();
    let mut fit_err = 0.0f64;
    for lam in [1e-6, 1e-3, 1e-1, 10.0] {
        let (coef, _, _) = dense_fit(&b, &y, lam);
        let ours = s.fit(&y, lam).unwrap().coefficients;
        fit_err = fit_err.max(common::max_abs_diff(&coef, &ours));
    }
    out.push(("penalized fit vs dense solver", fit_err <= 1e-8, format!("{fit_err:.1e}")));

    let grid = LambdaGrid { min: 1e-6, max: 1e2, points: 30 }.values().unwrap();
    let scan: Vec<f64> = grid
        .iter()
        .map(|&l| {
            let (_, df, sse) = dense_fit(&b, &y, l);
            n as f64 * sse / (n as f64 - df).powi(2)
        })
        .collect();
    let best = (0..grid.len()).fold(0, |bi, i| if scan[i] <= scan[bi] { i } else { bi });
    let chosen = s.select_lambda(&y, &grid).unwrap().lambda;
    out.push(("GCV argmin = grid scan", chosen == grid[best], format!("λ = {chosen:.3e}")));

    let curves: Vec<PhasedCurve> = (0..60)
        .map(|i| {
            let (a, b2, c) = (2.0 * rng.normal(), 1.4 * rng.normal(), rng.normal());
            let y = phase_grid(80)
                .iter()
                .map(|&t| a * (2.0 * PI * t).sin() + b2 * (2.0 * PI * t).cos() + c * (4.0 * PI * t).sin() + 0.5 * t * rng.normal() + 0.05 * rng.normal())
                .collect();
            PhasedCurve::new(format!("c{i}"), y).unwrap()
        })
        .collect();
    let data = smooth_all(&curves, &BasisSystem::uniform(80, CUBIC).unwrap(), &LambdaChoice::Fixed(1e-4)).unwrap().0;
    let res = fpca::fpca(&data, 5).unwrap();
    let gram = res.eig_coefs.transpose() * data.basis.gram() * &res.eig_coefs;
    let ortho = (gram - DMatrix::identity(5, 5)).amax();
    out.push(("eigenfunction orthonormality", ortho <= 1e-8, format!("{ortho:.1e}")));

    let (vals, _, _) = dense_fpca_oracle(&data, 2000, 5);
    let rel = (0..5).map(|m| (res.eigenvalues[m] - vals[m]).abs() / vals[m]).fold(0.0, f64::max);
    out.push(("FPCA vs 2000-point dense grid", rel <= 1e-4, format!("max rel {rel:.1e}")));

    let nn = res.scores.nrows() as f64;
    let var_err = (0..5)
        .map(|m| {
            let col = res.scores.column(m);
            let mu = col.mean();
            let v = col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nn - 1.0);
            (v - res.eigenvalues[m]).abs() / res.eigenvalues[m]
        })
        .fold(0.0, f64::max);
    out.push(("score variance = eigenvalue", var_err <= 1e-6, format!("max rel {var_err:.1e}")));

    let mut wrng = Lcg(77);
    let mut ward_fail = 0;
    for trial in 0..100 {
        let np = 2 + trial % 7;
        let pts: Vec<Vec<f64>> = (0..np).map(|_| vec![wrng.normal(), wrng.normal()]).collect();
        let d = ward_linkage(&pts).unwrap();
        let (_, heights) = exhaustive_ward(&pts);
        let same = heights.iter().zip(&d.merges).all(|(h, m)| (h - m.height).abs() <= 1e-10 * (1.0 + h));
        if !same {
            ward_fail += 1;
        }
    }
    out.push(("Ward = exhaustive search (N ≤ 8, 100 trials)", ward_fail == 0, format!("{ward_fail} mismatches")));

    let line: Vec<Vec<f64>> = (0..12).map(|i| vec![(i * i) as f64]).collect();
    let singles: Vec<usize> = (0..12).collect();
    let h10: f64 = (1..=10).map(|j| 1.0 / j as f64).sum();
    let c_all = connectivity(&line, &singles, 10).unwrap();
    let c_three = connectivity(&[vec![0.0], vec![1.0], vec![3.0]], &[0, 0, 1], 2).unwrap();
    let harmonic_ok = (c_all - 12.0 * h10).abs() < 1e-12 && c_three == 2.5;
    out.push(("connectivity harmonic sums", harmonic_ok, format!("{c_all:.6} = 12·H10, {c_three}")));
    out
}

fn criterion_6() -> Outcome {
    let checks = numerical_checks();
    let pass = checks.iter().all(|c| c.1);
    let detail: Vec<String> = checks
        .iter()
        .map(|(name, ok, v)| format!("{}{name} ({v})", if *ok { "" } else { "FAILED " }))
        .collect();
    outcome(pass, detail.join("; "))
}

fn hash_dir(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(key, Sha256::digest(std::fs::read(&p).unwrap()).to_vec());
            }
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sim = simgen::generate(&SimScenario::sine_cosine(), 3).unwrap();
    simgen::write_sim_dir(&dir.path().join("sim"), &sim).unwrap();
    let sur = simgen::surrogate(&[120, 80], 3, true).unwrap();
    simgen::write_surrogate_dir(&dir.path().join("sur"), &sur).unwrap();
    let configs = |tag: &str| {
        [
            PipelineConfig {
                phased: Some(dir.path().join("sim/curves")),
                reference_labels: Some(dir.path().join("sim").join(simgen::TRUTH_CSV)),
                output_dir: dir.path().join(format!("sim_{tag}")),
                n_components: 2,
                seed: 3,
                ..Default::default()
            },
            PipelineConfig {
                catalog: Some(dir.path().join("sur/catalog.csv")),
                lightcurves: Some(dir.path().join("sur/lightcurves")),
                output_dir: dir.path().join(format!("sur_{tag}")),
                seed: 3,
                ..Default::default()
            },
        ]
    };
    let mut files = 0;
    let mut differing = Vec::new();
    for (a, b) in configs("a").iter().zip(configs("b").iter()) {
        run_pipeline(a).unwrap();
        run_pipeline(b).unwrap();
        let (ha, hb) = (hash_dir(&a.output_dir), hash_dir(&b.output_dir));
        files += ha.len();
        if ha.keys().ne(hb.keys()) {
            differing.push("file sets differ".to_string());
        }
        differing.extend(ha.iter().filter(|(k, v)| hb.get(*k) != Some(v)).map(|(k, _)| k.clone()));
    }
    outcome(
        differing.is_empty() && files > 0,
        format!("two runs each of a simulated and a raw-catalog config: {files} artifacts compared by SHA-256, differing {differing:?}"),
    )
}

fn main() {
    let started = Instant::now();
    let s1 = scenario_runs(1);
    let s2 = scenario_runs(2);
    let s3 = scenario_runs(3);
    let results = [
        ("1", criterion_1(&s1)),
        ("2", criterion_range("scenario 1", &variance_explained_pct(&s1), 78.0, 88.0)),
        ("3", criterion_3(&s2)),
        ("4", criterion_4(&s3)),
        ("5", criterion_5()),
        ("6", criterion_6()),
        ("7", criterion_7()),
    ];
    for (id, o) in &results {
        println!("criterion {id}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.1?}{}",
        results.len() - failed.len(),
        results.len(),
        started.elapsed(),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
