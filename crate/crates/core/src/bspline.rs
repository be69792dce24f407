//! Clamped B-spline basis with knots at the sampling points, together with
//! its Gram matrix and second-derivative roughness penalty.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default spline order (cubic).
pub const CUBIC: usize = 4;

pub const MAX_ORDER: usize = 10;

/// Immutable description of a B-spline basis and its quadrature-derived
/// matrices.
#[derive(Debug, Clone)]
pub struct BasisSystem {
    order: usize,
    knots: Vec<f64>,
    n_basis: usize,
    gram: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

impl BasisSystem {
    /// Build the clamped basis over `sample_points`: the end points are
    /// repeated `order` times and every interior sample point is a simple
    /// knot, giving `L + order - 2` basis functions.
    pub fn build(sample_points: &[f64], order: usize) -> Result<Self> {
        let l = sample_points.len();
        if !(3..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "spline order must be in 3..={MAX_ORDER}, got {order}"
            )));
        }
        if l < order {
            return Err(Error::InvalidArgument(format!(
                "need at least {order} sample points for order {order}, got {l}"
            )));
        }
        if sample_points.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("sample points must lie in [0, 1]".into()));
        }
        if sample_points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "sample points must be strictly increasing".into(),
            ));
        }
        let (a, b) = (sample_points[0], sample_points[l - 1]);
        let mut knots = Vec::with_capacity(l + 2 * order - 2);
        knots.extend(std::iter::repeat_n(a, order));
        knots.extend_from_slice(&sample_points[1..l - 1]);
        knots.extend(std::iter::repeat_n(b, order));
        let n_basis = knots.len() - order;

        let mut basis = Self {
            order,
            knots,
            n_basis,
            gram: DMatrix::zeros(0, 0),
            penalty: DMatrix::zeros(0, 0),
        };
        basis.gram = basis.integrate_products(0, order);
        basis.penalty = basis.integrate_products(2, (order - 2).max(1));
        Ok(basis)
    }

    /// Basis on `L` evenly spaced points of `[0, 1]`.
    pub fn uniform(grid_len: usize, order: usize) -> Result<Self> {
        Self::build(&crate::phase_fold::phase_grid(grid_len), order)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn degree(&self) -> usize {
        self.order - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions `K`.
    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Distinct knot values, i.e. the sample points the basis was built on.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.knots.clone();
        out.dedup();
        out
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// `J[a][b] = ∫ φ_a φ_b`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `R[a][b] = ∫ φ_a'' φ_b''`.
    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    /// Index `i` of the knot span `[u_i, u_{i+1})` containing `t`; the right
    /// end of the domain belongs to the last non-empty span.
    fn span(&self, t: f64) -> usize {
        let p = self.degree();
        let hi = self.n_basis; // knots[n_basis] is the right end
        if t >= self.knots[hi] {
            return hi - 1;
        }
        // largest i in [p, hi-1] with knots[i] <= t
        let i = self.knots[..hi].partition_point(|&u| u <= t);
        i.saturating_sub(1).max(p)
    }

    /// Nonzero basis values and derivatives at `t`. Returns the index of the
    /// first nonzero function and `ders[k][j]`, the `k`-th derivative of
    /// basis function `first + j`, for `k = 0..=n_deriv`.
    fn local_derivs(&self, t: f64, n_deriv: usize) -> (usize, Vec<Vec<f64>>) {
        let p = self.degree();
        let u = &self.knots;
        let i = self.span(t);

        // Triangular table of basis values (upper) and knot differences (lower).
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[i + 1 - j];
            right[j] = u[i + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let n = n_deriv.min(p);
        let mut ders = vec![vec![0.0; p + 1]; n_deriv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for (k, row) in ders.iter_mut().enumerate().take(n + 1).skip(1) {
            for v in row.iter_mut() {
                *v *= fac;
            }
            fac *= (p - k) as f64;
        }
        (i - p, ders)
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let (a, b) = self.domain();
        if !(a..=b).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [{a}, {b}]")));
        }
        Ok(())
    }

    /// Values of the `order` basis functions that may be nonzero at `t`,
    /// starting at basis index `first`.
    pub fn eval_local(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        self.check_domain(t)?;
        let (first, mut d) = self.local_derivs(t, 0);
        Ok((first, d.swap_remove(0)))
    }

    /// Like [`eval_local`](Self::eval_local) for the `deriv`-th derivative.
    pub fn eval_local_deriv(&self, t: f64, deriv: usize) -> Result<(usize, Vec<f64>)> {
        self.check_domain(t)?;
        let (first, mut d) = self.local_derivs(t, deriv);
        Ok((first, d.swap_remove(deriv)))
    }

    /// Dense basis matrix, one row per `t`, one column per basis function.
    pub fn eval_basis(&self, t_values: &[f64]) -> Result<DMatrix<f64>> {
        let mut phi = DMatrix::zeros(t_values.len(), self.n_basis);
        for (row, &t) in t_values.iter().enumerate() {
            let (first, vals) = self.eval_local(t)?;
            for (j, v) in vals.into_iter().enumerate() {
                phi[(row, first + j)] = v;
            }
        }
        Ok(phi)
    }

    /// Evaluate the function with coefficients `coefs` at `t`.
    pub fn evaluate(&self, coefs: &[f64], t: f64) -> Result<f64> {
        if coefs.len() != self.n_basis {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                self.n_basis,
                coefs.len()
            )));
        }
        let (first, vals) = self.eval_local(t)?;
        Ok(vals.iter().zip(&coefs[first..]).map(|(v, c)| v * c).sum())
    }

    /// Greville abscissae; an affine function `a + b t` has coefficients
    /// `a + b * greville[k]`.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree();
        (0..self.n_basis)
            .map(|k| self.knots[k + 1..=k + p].iter().sum::<f64>() / p as f64)
            .collect()
    }

    /// `∫ D^deriv φ_a · D^deriv φ_b` by per-span Gauss–Legendre quadrature
    /// with `n_nodes` nodes.
    fn integrate_products(&self, deriv: usize, n_nodes: usize) -> DMatrix<f64> {
        let (nodes, weights) = gauss_legendre(n_nodes);
        let k = self.n_basis;
        let mut m = DMatrix::zeros(k, k);
        for span in self.knots.windows(2) {
            let (a, b) = (span[0], span[1]);
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let (first, d) = self.local_derivs(t, deriv);
                let v = &d[deriv];
                for (i, vi) in v.iter().enumerate() {
                    for (j, vj) in v.iter().enumerate() {
                        m[(first + i, first + j)] += w * half * vi * vj;
                    }
                }
            }
        }
        // Exact symmetry regardless of accumulation order.
        for i in 0..k {
            for j in 0..i {
                let s = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_n'(x).
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
