//! Functional principal component analysis in coefficient space.
//!
//! With the Gram factorization `J = L Lᵀ`, the covariance operator of the
//! smoothed curves restricted to the spline space is similar to the symmetric
//! matrix `Lᵀ Cov(C) L`, so its eigenpairs give the eigenvalues directly and
//! the eigenfunction coefficients as `L⁻ᵀ u`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_id_matrix, write_table};
use crate::smoother::FunctionalDataSet;

#[derive(Debug, Clone)]
pub struct FpcaResult {
    /// All `K` eigenvalues, nonincreasing and nonnegative.
    pub eigenvalues: Vec<f64>,
    /// `K×M`; column `m` holds the coefficients of eigenfunction `m`.
    pub eig_coefs: DMatrix<f64>,
    /// `N×M` FPC scores of the centered curves.
    pub scores: DMatrix<f64>,
    /// Coefficients of the sample mean function.
    pub mean_coefs: Vec<f64>,
    /// `J Ξ`, so that scores are `(c - c̄)ᵀ J Ξ`.
    projector: DMatrix<f64>,
}

impl FpcaResult {
    pub fn n_components(&self) -> usize {
        self.eig_coefs.ncols()
    }

    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Fraction of total variance carried by the first `m` components. Data
    /// without any variance counts as fully explained.
    pub fn variance_explained(&self, m: usize) -> f64 {
        let total = self.total_variance();
        if total <= 0.0 {
            return 1.0;
        }
        let m = m.min(self.eigenvalues.len());
        (self.eigenvalues[..m].iter().sum::<f64>() / total).clamp(0.0, 1.0)
    }

    /// Scores of a new curve (same basis) against the stored eigenfunctions.
    pub fn project(&self, coefs: &[f64]) -> Result<Vec<f64>> {
        if coefs.len() != self.mean_coefs.len() {
            return Err(Error::InvalidArgument(format!(
                "basis mismatch: expected {} coefficients, got {}",
                self.mean_coefs.len(),
                coefs.len()
            )));
        }
        let centered = DVector::from_iterator(
            coefs.len(),
            coefs.iter().zip(&self.mean_coefs).map(|(c, m)| c - m),
        );
        Ok(self.projector.tr_mul(&centered).as_slice().to_vec())
    }

    pub fn score_rows(&self) -> Vec<Vec<f64>> {
        self.scores
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// Third central moment over the second to the 3/2, or 0 for constant input.
fn skewness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return 0.0;
    }
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Run FPCA keeping `n_components` components.
pub fn fpca(data: &FunctionalDataSet, n_components: usize) -> Result<FpcaResult> {
    let n = data.len();
    let k = data.basis.n_basis();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("FPCA needs at least 2 curves, got {n}")));
    }
    let max_m = (n - 1).min(k);
    if n_components == 0 || n_components > max_m {
        return Err(Error::InvalidArgument(format!(
            "n_components must be in 1..={max_m}, got {n_components}"
        )));
    }

    let mean = data.coef.row_mean();
    let mut centered = data.coef.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }

    let l = data
        .basis
        .gram()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Linalg("Gram matrix is not positive definite".into()))?
        .unpack();
    let y = &centered * &l;
    let mut s = y.tr_mul(&y) / (n as f64 - 1.0);
    for i in 0..k {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let eig = s.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();

    let mut u = DMatrix::zeros(k, n_components);
    for (col, &i) in order.iter().take(n_components).enumerate() {
        u.set_column(col, &eig.eigenvectors.column(i));
    }
    let mut scores = &y * &u;

    // Deterministic signs: nonnegative score skewness, else a positive first
    // nonzero eigenvector entry.
    for m in 0..n_components {
        let col: Vec<f64> = scores.column(m).iter().copied().collect();
        let skew = skewness(&col);
        let flip = if skew.abs() > 1e-12 {
            skew < 0.0
        } else {
            u.column(m)
                .iter()
                .find(|v| v.abs() > 1e-14)
                .is_some_and(|v| *v < 0.0)
        };
        if flip {
            u.column_mut(m).neg_mut();
            scores.column_mut(m).neg_mut();
        }
    }

    let eig_coefs = l
        .transpose()
        .solve_upper_triangular(&u)
        .ok_or_else(|| Error::Linalg("triangular solve failed".into()))?;
    let projector = &l * &u;

    Ok(FpcaResult {
        eigenvalues,
        eig_coefs,
        scores,
        mean_coefs: mean.iter().copied().collect(),
        projector,
    })
}

pub fn write_scores(path: &Path, ids: &[String], result: &FpcaResult) -> Result<()> {
    let mut header = vec!["id".to_string()];
    header.extend((1..=result.n_components()).map(|m| format!("f{m}")));
    write_id_matrix(path, &header, ids, &result.score_rows())
}

/// Scree table: component, eigenvalue, fraction and cumulative fraction, for
/// components up to the rank bound `rank`.
pub fn write_scree(path: &Path, result: &FpcaResult, rank: usize) -> Result<()> {
    let total = result.total_variance();
    let mut cum = 0.0;
    let rows: Vec<Vec<String>> = result
        .eigenvalues
        .iter()
        .take(rank)
        .enumerate()
        .map(|(i, &rho)| {
            let frac = if total > 0.0 { rho / total } else { 0.0 };
            cum += frac;
            vec![(i + 1).to_string(), fmt_f64(rho), fmt_f64(frac), fmt_f64(cum)]
        })
        .collect();
    write_table(path, &["m", "eigenvalue", "fraction", "cumulative"], &rows)
}

/// Eigenfunctions sampled at `phases`: columns phase, xi1..xiM.
pub fn write_eigenfunctions(
    path: &Path,
    basis: &crate::bspline::BasisSystem,
    result: &FpcaResult,
    phases: &[f64],
) -> Result<()> {
    let phi = basis.eval_basis(phases)?;
    let vals = &phi * &result.eig_coefs;
    let mut header = vec!["phase"];
    let names: Vec<String> = (1..=result.n_components()).map(|m| format!("xi{m}")).collect();
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = phases
        .iter()
        .enumerate()
        .map(|(i, p)| {
            std::iter::once(fmt_f64(*p))
                .chain(vals.row(i).iter().map(|v| fmt_f64(*v)))
                .collect()
        })
        .collect();
    write_table(path, &header, &rows)
}
