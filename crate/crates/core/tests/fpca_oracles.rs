mod common;

use std::f64::consts::PI;

use common::{dense_fpca_oracle, trapezoid, Lcg};
use lcfpca::bspline::{BasisSystem, CUBIC};
use lcfpca::phase_fold::{phase_grid, PhasedCurve};
use lcfpca::smoother::{smooth_all, FunctionalDataSet, LambdaChoice};
use lcfpca::{fpca, FpcaResult};
use nalgebra::DMatrix;

/// Curves with five modes of well separated variance plus a little noise.
fn dataset(n_curves: usize, grid: usize, seed: u64) -> FunctionalDataSet {
    type Mode = (f64, fn(f64) -> f64);
    let modes: [Mode; 5] = [
        (4.0, |t| (2.0 * PI * t).sin()),
        (2.0, |t| (2.0 * PI * t).cos()),
        (1.0, |t| (4.0 * PI * t).sin()),
        (0.5, |t| (4.0 * PI * t).cos()),
        (0.25, |t| t - 0.5),
    ];
    let mut rng = Lcg(seed);
    let ts = phase_grid(grid);
    let curves: Vec<PhasedCurve> = (0..n_curves)
        .map(|i| {
            let z: Vec<f64> = modes.iter().map(|(v, _)| v.sqrt() * rng.normal()).collect();
            let y = ts
                .iter()
                .map(|&t| 1.0 + modes.iter().zip(&z).map(|((_, f), z)| z * f(t)).sum::<f64>() + 0.05 * rng.normal())
                .collect();
            PhasedCurve::new(format!("c{i}"), y).unwrap()
        })
        .collect();
    let basis = BasisSystem::uniform(grid, CUBIC).unwrap();
    smooth_all(&curves, &basis, &LambdaChoice::Fixed(1e-4)).unwrap().0
}

fn eigenfunction_values(data: &FunctionalDataSet, res: &FpcaResult, ts: &[f64]) -> DMatrix<f64> {
    data.basis.eval_basis(ts).unwrap() * &res.eig_coefs
}

#[test]
fn matches_dense_grid_covariance() {
    let data = dataset(60, 50, 7);
    let res = fpca(&data, 5).unwrap();
    let (vals, funcs, w) = dense_fpca_oracle(&data, 2000, 5);
    let (ts, _) = trapezoid(2000);
    let ours = eigenfunction_values(&data, &res, &ts);
    for m in 0..5 {
        let rel = (res.eigenvalues[m] - vals[m]).abs() / vals[m];
        assert!(rel <= 1e-4, "eigenvalue {m}: {} vs {} (rel {rel:e})", res.eigenvalues[m], vals[m]);
        let dot: f64 = (0..ts.len()).map(|g| w[g] * ours[(g, m)] * funcs[m][g]).sum();
        let sign = dot.signum();
        let err: f64 = (0..ts.len()).map(|g| w[g] * (ours[(g, m)] - sign * funcs[m][g]).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-4, "eigenfunction {m}: L2 error {err:e}");
    }
}

#[test]
fn eigenfunctions_are_orthonormal() {
    let data = dataset(40, 272, 3);
    let res = fpca(&data, 5).unwrap();
    let g = res.eig_coefs.transpose() * data.basis.gram() * &res.eig_coefs;
    let err = (g - DMatrix::identity(5, 5)).amax();
    assert!(err <= 1e-8, "{err:e}");
}

#[test]
fn score_variance_equals_eigenvalue() {
    let data = dataset(50, 100, 11);
    let res = fpca(&data, 5).unwrap();
    let n = res.scores.nrows() as f64;
    for m in 0..5 {
        let col = res.scores.column(m);
        let mean = col.mean();
        assert!(mean.abs() < 1e-10 * res.eigenvalues[0].sqrt());
        let var = col.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - res.eigenvalues[m]).abs() / res.eigenvalues[m] <= 1e-6, "m {m}");
    }
}

#[test]
fn full_rank_scores_reconstruct_curves() {
    let data = dataset(12, 30, 5);
    let rank = 11;
    let res = fpca(&data, rank).unwrap();
    for i in 0..data.len() {
        let mut rec: Vec<f64> = res.mean_coefs.clone();
        for m in 0..rank {
            for (k, r) in rec.iter_mut().enumerate() {
                *r += res.scores[(i, m)] * res.eig_coefs[(k, m)];
            }
        }
        let diff: Vec<f64> = rec.iter().zip(data.coef.row(i).iter()).map(|(a, b)| a - b).collect();
        let dv = nalgebra::DVector::from_vec(diff);
        let l2 = (dv.transpose() * data.basis.gram() * &dv)[(0, 0)].sqrt();
        assert!(l2 < 1e-9, "curve {i}: {l2:e}");
    }
}

#[test]
fn projection_of_sample_matches_scores() {
    let data = dataset(20, 40, 9);
    let res = fpca(&data, 3).unwrap();
    for i in [0, 7, 19] {
        let row: Vec<f64> = data.coef.row(i).iter().copied().collect();
        let p = res.project(&row).unwrap();
        for (m, pm) in p.iter().enumerate() {
            assert!((pm - res.scores[(i, m)]).abs() < 1e-10);
        }
    }
}
