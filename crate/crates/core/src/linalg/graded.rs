//! Factorization of the scaled design `G = diag(w) Ψ` that keeps relative accuracy when the
//! row weights `w_k = sqrt(λ_k)` span hundreds of orders of magnitude.
//!
//! Rows are sorted by decreasing max-norm and factored with Householder QR with column
//! pivoting, which is row-wise backward stable; the singular values of the triangular factor
//! are then taken from one-sided Jacobi on `Rᵀ`, which is column-graded. Solves go through the
//! implicit `Q` so that no quantity of size `1/λ_N` is ever multiplied against one of size `λ_1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of a pivot, against the remaining rows, below which the factor is rank deficient.
pub const RANK_TOL: f64 = 1e-13;

const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone)]
pub struct GradedFactor {
    m: usize,
    n: usize,
    /// Householder vectors below the diagonal, `R` on and above it (sorted/pivoted order).
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    /// `row_perm[i]` is the original row stored at sorted position `i`.
    row_perm: Vec<usize>,
    /// `col_perm[j]` is the original column at pivoted position `j`.
    col_perm: Vec<usize>,
    weights: Vec<f64>,
    rank: usize,
}

impl GradedFactor {
    /// Factors `diag(weights) · psi`. `weights` must be positive and finite.
    pub fn new(weights: &[f64], psi: &DMatrix<f64>) -> Result<Self> {
        let (m, n) = psi.shape();
        if weights.len() != m {
            return Err(Error::shape(format!(
                "{} row weights for a design with {m} rows",
                weights.len()
            )));
        }
        if m == 0 || n == 0 {
            return Err(Error::shape("empty design"));
        }
        if psi.iter().chain(weights).any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite entry in scaled design"));
        }

        // sort rows of G by decreasing max-norm
        let row_max: Vec<f64> = (0..m)
            .map(|k| weights[k] * psi.row(k).iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
            .collect();
        let mut row_perm: Vec<usize> = (0..m).collect();
        row_perm.sort_by(|&a, &b| row_max[b].total_cmp(&row_max[a]));

        let mut qr = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            for (i, &k) in row_perm.iter().enumerate() {
                qr[(i, j)] = weights[k] * psi[(k, j)];
            }
        }

        // Frobenius norm of sorted rows i.. for the rank test
        let mut suffix = vec![0.0; m + 1];
        for i in (0..m).rev() {
            let row_sq: f64 = (0..n).map(|j| qr[(i, j)] * qr[(i, j)]).sum();
            suffix[i] = suffix[i + 1] + row_sq;
        }
        let suffix: Vec<f64> = suffix.into_iter().map(f64::sqrt).collect();

        let steps = m.min(n);
        let mut tau = vec![0.0; steps];
        let mut col_perm: Vec<usize> = (0..n).collect();
        let data = qr.as_mut_slice();
        let mut norms: Vec<f64> = (0..n).map(|j| norm2(&data[j * m..(j + 1) * m])).collect();
        // norms at their last exact recomputation, for the downdating safeguard
        let mut exact = norms.clone();
        let mut rank = steps;

        for j in 0..steps {
            let p = (j..n)
                .max_by(|&a, &b| norms[a].total_cmp(&norms[b]))
                .expect("non-empty pivot range");
            if p != j {
                let (left, right) = data.split_at_mut(p * m);
                left[j * m..(j + 1) * m].swap_with_slice(&mut right[..m]);
                norms.swap(j, p);
                exact.swap(j, p);
                col_perm.swap(j, p);
            }
            if norms[j] <= RANK_TOL * suffix[j] || norms[j] == 0.0 {
                rank = j;
                break;
            }

            let (head, tail) = data.split_at_mut((j + 1) * m);
            let col = &mut head[j * m + j..(j + 1) * m];
            tau[j] = make_reflector(col);
            let t = tau[j];
            if t == 0.0 {
                for (k, chunk) in tail.chunks_exact_mut(m).enumerate() {
                    downdate(&mut norms[j + 1 + k], &mut exact[j + 1 + k], chunk[j], &chunk[j + 1..]);
                }
                continue;
            }
            let v = &col[1..];
            for (k, chunk) in tail.chunks_exact_mut(m).enumerate() {
                let target = &mut chunk[j..];
                let (top, rest) = target.split_first_mut().expect("row j exists");
                let s = t * (*top + dot(v, rest));
                *top -= s;
                axpy(-s, v, rest);
                downdate(&mut norms[j + 1 + k], &mut exact[j + 1 + k], *top, rest);
            }
        }

        Ok(GradedFactor {
            m,
            n,
            qr,
            tau,
            row_perm,
            col_perm,
            weights: weights.to_vec(),
            rank,
        })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    /// Numerical rank of `G`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.n
    }

    /// Singular values of `G` in decreasing order, `N` of them, zeros for the rank-deficient part.
    pub fn singular_values(&self) -> Vec<f64> {
        let r = self.rank;
        let n = self.n;
        let mut out = vec![0.0; n];
        if r == 0 {
            return out;
        }
        // X = R[..r, ..]ᵀ, column i of X is row i of R.
        let mut x = vec![0.0; n * r];
        for i in 0..r {
            for k in i..n {
                x[i * n + k] = self.qr[(i, k)];
            }
        }
        let mut sv = one_sided_jacobi(&mut x, n, r);
        sv.sort_by(|a, b| b.total_cmp(a));
        out[..r].copy_from_slice(&sv);
        out
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.qr[(i, j)]
    }

    fn require_full_rank(&self) -> Result<()> {
        if self.is_full_rank() {
            Ok(())
        } else {
            Err(Error::numeric(format!(
                "scaled design has numerical rank {} < N = {}",
                self.rank, self.n
            )))
        }
    }

    /// `w = R^{-T} Pᵀ y`
    fn forward(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut w: Vec<f64> = self.col_perm.iter().map(|&c| y[c]).collect();
        for j in 0..n {
            let col = &self.qr.as_slice()[j * self.m..j * self.m + j];
            let s = dot(col, &w[..j]);
            w[j] = (w[j] - s) / self.r(j, j);
        }
        w
    }

    /// Applies `Q` (implicit reflectors) to `[w; 0]`, in sorted row order.
    fn apply_q(&self, w: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut z = vec![0.0; m];
        z[..w.len()].copy_from_slice(w);
        let data = self.qr.as_slice();
        for j in (0..self.tau.len()).rev() {
            let t = self.tau[j];
            if t == 0.0 {
                continue;
            }
            let v = &data[j * m + j + 1..(j + 1) * m];
            let (top, rest) = z[j..].split_first_mut().expect("row j exists");
            let s = t * (*top + dot(v, rest));
            *top -= s;
            axpy(-s, v, rest);
        }
        z
    }

    /// Feature-space coefficients `c = Λ Ψ K^{-1} y`, so that the interpolant is `ψ(x)ᵀ c`.
    pub fn feature_coefficients(&self, y: &[f64]) -> Result<DVector<f64>> {
        if y.len() != self.n {
            return Err(Error::shape(format!("{} labels for N = {}", y.len(), self.n)));
        }
        self.require_full_rank()?;
        let z = self.apply_q(&self.forward(y));
        let mut c = DVector::zeros(self.m);
        for (i, &k) in self.row_perm.iter().enumerate() {
            c[k] = self.weights[k] * z[i];
        }
        Ok(c)
    }

    /// The `M × N` map `C = Λ Ψ K^{-1}` from labels to feature-space coefficients.
    pub fn coefficient_matrix(&self) -> Result<DMatrix<f64>> {
        self.require_full_rank()?;
        let mut out = DMatrix::zeros(self.m, self.n);
        let mut e = vec![0.0; self.n];
        for i in 0..self.n {
            e[i] = 1.0;
            let c = self.feature_coefficients(&e)?;
            out.set_column(i, &c);
            e[i] = 0.0;
        }
        Ok(out)
    }

    /// `‖Λ Ψ K^{-1}‖_F²`, the noise-to-risk trace `tr[(ΨᵀΛ²Ψ)(ΨᵀΛΨ)^{-2}]`.
    pub fn variance_trace(&self) -> Result<f64> {
        let c = self.coefficient_matrix()?;
        Ok(c.iter().map(|v| v * v).sum())
    }

    /// `K^{-1} y` with `K = GᵀG`.
    pub fn solve_kernel(&self, y: &[f64]) -> Result<DVector<f64>> {
        if y.len() != self.n {
            return Err(Error::shape(format!("{} labels for N = {}", y.len(), self.n)));
        }
        self.require_full_rank()?;
        let n = self.n;
        let mut u = self.forward(y);
        for j in (0..n).rev() {
            let mut s = u[j];
            for (k, uk) in u.iter().enumerate().skip(j + 1) {
                s -= self.r(j, k) * uk;
            }
            u[j] = s / self.r(j, j);
        }
        let mut alpha = DVector::zeros(n);
        for (j, &c) in self.col_perm.iter().enumerate() {
            alpha[c] = u[j];
        }
        Ok(alpha)
    }
}

/// Removes the new row-`j` entry `top` from a trailing column norm, recomputing from `rest`
/// when cancellation has eaten too many digits (the LAPACK `xLAQP2` safeguard).
#[inline]
fn downdate(norm: &mut f64, exact: &mut f64, top: f64, rest: &[f64]) {
    if *norm == 0.0 {
        return;
    }
    let r = top.abs() / *norm;
    let shrink = (1.0 - r * r).max(0.0);
    let ratio = *norm / *exact;
    if shrink * ratio * ratio <= f64::EPSILON.sqrt() {
        *norm = norm2(rest);
        *exact = *norm;
    } else {
        *norm *= shrink.sqrt();
    }
}

/// Overwrites `x` (first entry `alpha`, rest the tail) with `beta` and the scaled reflector
/// vector, returning `tau` such that `(I - tau v vᵀ) x = beta e_1` with `v_0 = 1`.
fn make_reflector(x: &mut [f64]) -> f64 {
    let alpha = x[0];
    let xnorm = norm2(&x[1..]);
    if xnorm == 0.0 {
        return 0.0;
    }
    let beta = -alpha.signum() * alpha.hypot(xnorm);
    let beta = if beta == 0.0 { xnorm } else { beta };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    tau
}

/// One-sided (Hestenes) Jacobi on the `rows × cols` column-major matrix `x`; returns the
/// column norms after convergence, i.e. the singular values.
pub(crate) fn one_sided_jacobi(x: &mut [f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut sq: Vec<f64> = (0..cols)
        .map(|j| {
            let c = &x[j * rows..(j + 1) * rows];
            dot(c, c)
        })
        .collect();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (left, right) = x.split_at_mut(q * rows);
                let cp = &mut left[p * rows..(p + 1) * rows];
                let cq = &mut right[..rows];
                let g = dot(cp, cq);
                let (a, b) = (sq[p], sq[q]);
                if g == 0.0 || g.abs() <= JACOBI_TOL * a.sqrt() * b.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for (u, v) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (pu, qv) = (*u, *v);
                    *u = cs * pu - sn * qv;
                    *v = sn * pu + cs * qv;
                }
                sq[p] = dot(cp, cp);
                sq[q] = dot(cq, cq);
                // the shrinking column loses digits to cancellation; recompute it
                if sq[p] < 0.25 * a {
                    sq[p] = dot(cp, cp);
                }
                if sq[q] < 0.25 * b {
                    sq[q] = dot(cq, cq);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (0..cols)
        .map(|j| {
            let c = &x[j * rows..(j + 1) * rows];
            dot(c, c).sqrt()
        })
        .collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
