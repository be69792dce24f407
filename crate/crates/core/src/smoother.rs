//! Penalized least-squares smoothing over a shared B-spline basis with the
//! smoothing parameter chosen by generalized cross-validation.
//!
//! A [`Smoother`] diagonalizes `ΦᵀΦ` and the penalty simultaneously once, so
//! every subsequent fit, trace and residual sum of squares for any `λ` costs
//! `O(K)` or `O(LK)` instead of a fresh `K×K` factorization.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bspline::BasisSystem;
use crate::error::{Error, Result};
use crate::io::{ensure_dir, fmt_f64, read_id_matrix, write_id_matrix, write_table};
use crate::par;
use crate::phase_fold::PhasedCurve;

/// Substitute for `λ = 0` when the unpenalized system is singular.
pub const LAMBDA_MIN: f64 = 1e-10;

/// Generalized eigenvalues below this are treated as exact penalty null space.
const NULL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothFit {
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    /// Effective degrees of freedom, the trace of the hat matrix.
    pub df: f64,
    pub gcv: f64,
    pub sse: f64,
}

/// Log-spaced λ search grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            min: 1e-8,
            max: 1e4,
            points: 50,
        }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0) || !(self.max >= self.min) || self.points == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid lambda grid {self:?}: need 0 < min <= max and points >= 1"
            )));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let (a, b) = (self.min.log10(), self.max.log10());
        let step = (b - a) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| 10f64.powf(a + step * i as f64))
            .collect())
    }
}

/// How each curve's smoothing parameter is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    /// Per-curve GCV minimization over the given grid.
    Gcv(Vec<f64>),
    /// One λ shared by every curve.
    Fixed(f64),
}

/// Penalized smoother for data observed at fixed points.
#[derive(Debug, Clone)]
pub struct Smoother {
    basis: BasisSystem,
    n_points: usize,
    /// `Φ T`, the basis matrix in the simultaneously diagonalizing coordinates.
    phi_t: DMatrix<f64>,
    /// `T`, mapping diagonal coordinates back to B-spline coefficients.
    transform: DMatrix<f64>,
    /// Generalized eigenvalues `m_k ∈ [0, 1]` of the scaled penalty.
    m: Vec<f64>,
    /// Penalty scale `s`; the system is `ΦᵀΦ + (λ/s)·(sR)`.
    scale: f64,
}

impl Smoother {
    /// Smoother for data observed at `points` over `basis`.
    pub fn new(basis: &BasisSystem, points: &[f64]) -> Result<Self> {
        let phi = basis.eval_basis(points)?;
        let b = phi.transpose() * &phi;
        let r = basis.penalty();
        let scale = b.trace() / r.trace();
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::Linalg("degenerate penalty matrix".into()));
        }
        let sr = r * scale;
        let g = &b + &sr;
        let chol = g.cholesky().ok_or_else(|| {
            Error::Linalg("ΦᵀΦ + R is not positive definite".into())
        })?;
        let l = chol.l();
        let half = l
            .solve_lower_triangular(&sr)
            .ok_or_else(|| Error::Linalg("triangular solve failed".into()))?;
        let mut mm = l
            .solve_lower_triangular(&half.transpose())
            .ok_or_else(|| Error::Linalg("triangular solve failed".into()))?;
        let k = mm.nrows();
        for i in 0..k {
            for j in 0..i {
                let s = 0.5 * (mm[(i, j)] + mm[(j, i)]);
                mm[(i, j)] = s;
                mm[(j, i)] = s;
            }
        }
        let eig = mm.symmetric_eigen();
        let m: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&v| if v < NULL_TOL { 0.0 } else { v.min(1.0) })
            .collect();
        let transform = l
            .transpose()
            .solve_upper_triangular(&eig.eigenvectors)
            .ok_or_else(|| Error::Linalg("triangular solve failed".into()))?;
        let phi_t = &phi * &transform;
        Ok(Self {
            basis: basis.clone(),
            n_points: points.len(),
            phi_t,
            transform,
            m,
            scale,
        })
    }

    /// Smoother for data observed at the basis' own breakpoints.
    pub fn on_breakpoints(basis: &BasisSystem) -> Result<Self> {
        Self::new(basis, &basis.breakpoints())
    }

    pub fn basis(&self) -> &BasisSystem {
        &self.basis
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    fn is_singular_at_zero(&self) -> bool {
        self.m.iter().any(|&m| 1.0 - m < 1e-10)
    }

    fn shrink(&self, lambda: f64) -> Vec<f64> {
        let ratio = lambda / self.scale;
        self.m.iter().map(|&m| 1.0 / (1.0 - m + ratio * m)).collect()
    }

    fn effective_lambda(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        if lambda == 0.0 && self.is_singular_at_zero() {
            log::warn!("unpenalized system is singular; using lambda = {LAMBDA_MIN}");
            return Ok(LAMBDA_MIN);
        }
        Ok(lambda)
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n_points {
            return Err(Error::InvalidArgument(format!(
                "expected {} observations, got {}",
                self.n_points,
                y.len()
            )));
        }
        Ok(())
    }

    /// Effective degrees of freedom `tr[Φ(ΦᵀΦ + λR)⁻¹Φᵀ]`; independent of `y`.
    pub fn df(&self, lambda: f64) -> f64 {
        self.shrink(lambda)
            .iter()
            .zip(&self.m)
            .map(|(d, m)| (1.0 - m) * d)
            .sum()
    }

    fn gcv_from(&self, sse: f64, df: f64) -> f64 {
        let n = self.n_points as f64;
        if df >= n {
            f64::INFINITY
        } else {
            n * sse / (n - df).powi(2)
        }
    }

    /// Fit at a single λ.
    pub fn fit(&self, y: &[f64], lambda: f64) -> Result<SmoothFit> {
        self.check_len(y)?;
        let lambda = self.effective_lambda(lambda)?;
        let yv = DVector::from_column_slice(y);
        let z = self.phi_t.tr_mul(&yv);
        Ok(self.fit_projected(&yv, &z, lambda))
    }

    fn fit_projected(&self, y: &DVector<f64>, z: &DVector<f64>, lambda: f64) -> SmoothFit {
        let d = self.shrink(lambda);
        let w = DVector::from_iterator(z.len(), z.iter().zip(&d).map(|(z, d)| z * d));
        let coef = &self.transform * &w;
        let fitted = &self.phi_t * &w;
        let sse = (y - fitted).norm_squared();
        let df = self.df(lambda);
        SmoothFit {
            coefficients: coef.as_slice().to_vec(),
            lambda,
            df,
            gcv: self.gcv_from(sse, df),
            sse,
        }
    }

    /// `(gcv, df, sse)` at λ.
    pub fn gcv_score(&self, y: &[f64], lambda: f64) -> Result<(f64, f64, f64)> {
        let f = self.fit(y, lambda)?;
        Ok((f.gcv, f.df, f.sse))
    }

    /// Fit at the grid value minimizing GCV; ties go to the larger λ.
    pub fn select_lambda(&self, y: &[f64], grid: &[f64]) -> Result<SmoothFit> {
        self.check_len(y)?;
        if grid.is_empty() {
            return Err(Error::InvalidArgument("empty lambda grid".into()));
        }
        let yv = DVector::from_column_slice(y);
        let z = self.phi_t.tr_mul(&yv);
        let yy = yv.norm_squared();
        let mut best: Option<(f64, f64)> = None; // (gcv, lambda)
        for &raw in grid {
            let lambda = self.effective_lambda(raw)?;
            let d = self.shrink(lambda);
            let (mut cross, mut quad, mut df) = (0.0, 0.0, 0.0);
            for ((zk, dk), mk) in z.iter().zip(&d).zip(&self.m) {
                let z2 = zk * zk;
                cross += dk * z2;
                quad += (1.0 - mk) * dk * dk * z2;
                df += (1.0 - mk) * dk;
            }
            let sse = (yy - 2.0 * cross + quad).max(0.0);
            let gcv = self.gcv_from(sse, df);
            let better = match best {
                None => gcv.is_finite(),
                Some((g, l)) => gcv < g || (gcv == g && lambda > l),
            };
            if better {
                best = Some((gcv, lambda));
            }
        }
        let (_, lambda) = best.ok_or_else(|| {
            Error::Validation("GCV is infinite for every lambda on the grid".into())
        })?;
        Ok(self.fit_projected(&yv, &z, lambda))
    }

    pub fn fit_with(&self, y: &[f64], choice: &LambdaChoice) -> Result<SmoothFit> {
        match choice {
            LambdaChoice::Gcv(grid) => self.select_lambda(y, grid),
            LambdaChoice::Fixed(l) => self.fit(y, *l),
        }
    }
}

/// Fit `y`, observed at the basis' breakpoints, at a single λ.
pub fn fit_penalized(y: &[f64], basis: &BasisSystem, lambda: f64) -> Result<SmoothFit> {
    Smoother::on_breakpoints(basis)?.fit(y, lambda)
}

/// Smoothed coefficients of every curve over one shared basis.
#[derive(Debug, Clone)]
pub struct FunctionalDataSet {
    pub basis: BasisSystem,
    /// `N×K`; row `i` holds the coefficients of curve `i`.
    pub coef: DMatrix<f64>,
    pub ids: Vec<String>,
}

impl FunctionalDataSet {
    pub fn new(basis: BasisSystem, coef: DMatrix<f64>, ids: Vec<String>) -> Result<Self> {
        if coef.nrows() != ids.len() || coef.ncols() != basis.n_basis() {
            return Err(Error::InvalidArgument(format!(
                "coefficient matrix is {}×{}, expected {}×{}",
                coef.nrows(),
                coef.ncols(),
                ids.len(),
                basis.n_basis()
            )));
        }
        if coef.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite coefficient".into()));
        }
        Ok(Self { basis, coef, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Smooth every phased curve; rows follow input order.
pub fn smooth_all(
    phased: &[PhasedCurve],
    basis: &BasisSystem,
    choice: &LambdaChoice,
) -> Result<(FunctionalDataSet, Vec<SmoothFit>)> {
    if phased.is_empty() {
        return Err(Error::InvalidArgument("no curves to smooth".into()));
    }
    let smoother = Smoother::on_breakpoints(basis)?;
    let fits = par::try_map(phased, |c| {
        smoother
            .fit_with(&c.fluxes, choice)
            .map_err(|e| e.for_star(&c.star_id))
    })?;
    let k = basis.n_basis();
    let coef = DMatrix::from_fn(fits.len(), k, |i, j| fits[i].coefficients[j]);
    let ids = phased.iter().map(|c| c.star_id.clone()).collect();
    Ok((FunctionalDataSet::new(basis.clone(), coef, ids)?, fits))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct BasisSpec {
    grid_len: usize,
    order: usize,
}

pub const COEFFICIENTS_CSV: &str = "coefficients.csv";
pub const BASIS_JSON: &str = "basis.json";
pub const FIT_REPORT_CSV: &str = "fit_report.csv";

/// Write `coefficients.csv` and `basis.json` into `dir`.
pub fn write_functional(dir: &Path, data: &FunctionalDataSet) -> Result<()> {
    ensure_dir(dir)?;
    let spec = BasisSpec {
        grid_len: data.basis.breakpoints().len(),
        order: data.basis.order(),
    };
    let json = serde_json::to_string_pretty(&spec)?;
    std::fs::write(dir.join(BASIS_JSON), json + "\n").map_err(|e| Error::io(dir.join(BASIS_JSON), e))?;
    let mut header = vec!["id".to_string()];
    header.extend((1..=data.basis.n_basis()).map(|k| format!("c{k}")));
    let rows: Vec<Vec<f64>> = data.coef.row_iter().map(|r| r.iter().copied().collect()).collect();
    write_id_matrix(&dir.join(COEFFICIENTS_CSV), &header, &data.ids, &rows)
}

/// Read back a directory written by [`write_functional`]; the basis is
/// rebuilt on the evenly spaced grid it was recorded with.
pub fn read_functional(dir: &Path) -> Result<FunctionalDataSet> {
    let path = dir.join(BASIS_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let spec: BasisSpec = serde_json::from_str(&text)?;
    let basis = BasisSystem::uniform(spec.grid_len, spec.order)?;
    let m = read_id_matrix(&dir.join(COEFFICIENTS_CSV))?;
    let k = basis.n_basis();
    if m.rows.iter().any(|r| r.len() != k) {
        return Err(Error::Schema(format!("coefficient rows must have {k} values")));
    }
    let coef = DMatrix::from_fn(m.rows.len(), k, |i, j| m.rows[i][j]);
    FunctionalDataSet::new(basis, coef, m.ids)
}

pub fn write_fit_report(path: &Path, ids: &[String], fits: &[SmoothFit]) -> Result<()> {
    let rows: Vec<Vec<String>> = ids
        .iter()
        .zip(fits)
        .map(|(id, f)| {
            vec![id.clone(), fmt_f64(f.lambda), fmt_f64(f.df), fmt_f64(f.sse), fmt_f64(f.gcv)]
        })
        .collect();
    write_table(path, &["id", "lambda", "df", "sse", "gcv"], &rows)
}
