#![allow(dead_code)]

use std::collections::BTreeSet;

use lcfpca::bspline::BasisSystem;
use lcfpca::phase_fold::phase_grid;
use lcfpca::smoother::FunctionalDataSet;
use nalgebra::{DMatrix, DVector};

/// Cox–de Boor recursion, with the last basis function closed at the right
/// end of a clamped knot vector.
pub fn cox_de_boor(knots: &[f64], i: usize, order: usize, t: f64) -> f64 {
    let right = *knots.last().unwrap();
    if order == 1 {
        let (a, b) = (knots[i], knots[i + 1]);
        if (a <= t && t < b) || (t == right && b == right && a < b) {
            return 1.0;
        }
        return 0.0;
    }
    let mut v = 0.0;
    let d1 = knots[i + order - 1] - knots[i];
    if d1 > 0.0 {
        v += (t - knots[i]) / d1 * cox_de_boor(knots, i, order - 1, t);
    }
    let d2 = knots[i + order] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + order] - t) / d2 * cox_de_boor(knots, i + 1, order - 1, t);
    }
    v
}

/// Trapezoid weights on `n` evenly spaced points of [0,1].
pub fn trapezoid(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 1.0 / (n - 1) as f64;
    let t = (0..n).map(|i| i as f64 * h).collect();
    let w = (0..n)
        .map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h })
        .collect();
    (t, w)
}

/// Solve a square system by Gaussian elimination with full pivoting.
pub fn full_pivot_solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    a.clone().full_piv_lu().solve(&nalgebra::DVector::from_column_slice(b)).unwrap().as_slice().to_vec()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Simple deterministic LCG in [0,1) so oracle data does not depend on the
/// crate's own RNG plumbing.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let (u, v) = (self.next().max(1e-300), self.next());
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

/// Hat matrix `Φ (ΦᵀΦ + λR)⁻¹ Φᵀ` built column by column with full-pivot LU.
pub fn dense_fit(basis: &BasisSystem, y: &[f64], lambda: f64) -> (Vec<f64>, f64, f64) {
    let phi = basis.eval_basis(&phase_grid(y.len())).unwrap();
    let a = phi.tr_mul(&phi) + basis.penalty() * lambda;
    let rhs = phi.tr_mul(&DVector::from_column_slice(y));
    let coef = full_pivot_solve(&a, rhs.as_slice());
    let lu = a.full_piv_lu();
    let inv_pt = lu.solve(&phi.transpose()).unwrap();
    let hat: DMatrix<f64> = &phi * inv_pt;
    let fitted = &phi * DVector::from_column_slice(&coef);
    let sse = (DVector::from_column_slice(y) - fitted).norm_squared();
    (coef, hat.trace(), sse)
}

fn ess(points: &[Vec<f64>], members: &[usize]) -> f64 {
    let d = points[0].len();
    let n = members.len() as f64;
    let mut c = vec![0.0; d];
    for &i in members {
        for (cj, x) in c.iter_mut().zip(&points[i]) {
            *cj += x / n;
        }
    }
    members
        .iter()
        .map(|&i| points[i].iter().zip(&c).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
        .sum()
}

/// Brute-force Ward: at every step try all pairs of current clusters and
/// merge the one with the smallest increase in within-cluster sum of
/// squares. Returns the partition after each merge and the merge heights
/// `sqrt(2 ΔESS)`.
pub fn exhaustive_ward(points: &[Vec<f64>]) -> (Vec<BTreeSet<BTreeSet<usize>>>, Vec<f64>) {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let mut partitions = Vec::new();
    let mut heights = Vec::new();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let merged: Vec<usize> = clusters[a].iter().chain(&clusters[b]).copied().collect();
                let delta = ess(points, &merged) - ess(points, &clusters[a]) - ess(points, &clusters[b]);
                if delta < best.0 {
                    best = (delta, a, b);
                }
            }
        }
        let (delta, a, b) = best;
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        heights.push((2.0 * delta.max(0.0)).sqrt());
        partitions.push(clusters.iter().map(|c| c.iter().copied().collect()).collect());
    }
    (partitions, heights)
}

/// Eigenpairs of the covariance operator from curves sampled on a dense
/// grid with trapezoid weights, via the N×N dual problem.
pub fn dense_fpca_oracle(data: &FunctionalDataSet, points: usize, m: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let (ts, w) = trapezoid(points);
    let phi = data.basis.eval_basis(&ts).unwrap();
    let x = &data.coef * phi.transpose();
    let n = x.nrows();
    let mean = x.row_mean();
    let mut xc = x.clone();
    for mut r in xc.row_iter_mut() {
        r -= &mean;
    }
    let sw = DMatrix::from_diagonal(&DVector::from_iterator(points, w.iter().map(|v| v.sqrt())));
    let y = &xc * &sw;
    let dual = (&y * y.transpose()) / (n as f64 - 1.0);
    let eig = dual.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vals = Vec::new();
    let mut funcs = Vec::new();
    for &i in order.iter().take(m) {
        let lam = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i);
        // ξ(t) = Σ_i v_i x_i(t) / sqrt((N-1) λ)
        let f: Vec<f64> = (0..points)
            .map(|g| xc.column(g).dot(&v) / ((n as f64 - 1.0) * lam).sqrt())
            .collect();
        vals.push(lam);
        funcs.push(f);
    }
    (vals, funcs, w)
}

