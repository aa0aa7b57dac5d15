//! Dense kernels for small Markov-chain problems.
//!
//! Everything here is O(n³) and meant for desk-scale orders (a few hundred
//! states at most). Matrices are square, row-major and owned; vectors are
//! plain `Vec<f64>` / `&[f64]`.
//!
//! The resolvent solver deserves a note: for discount factors close to one,
//! `I − γP` has condition number of order `1/(1−γ)` and the solution is
//! dominated by a huge multiple of the all-ones vector. A plain LU solve then
//! loses absolute accuracy in exactly the direction that later gets
//! subtracted off (`V_γ − η/(1−γ)`). [`resolvent_solve`] refines the LU
//! solution with residuals computed in compensated arithmetic directly from
//! `γ` and `P`, which restores full relative accuracy.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;

use crate::error::LinalgError;

/// Relative pivot threshold for the LU factorization.
pub const PIVOT_RTOL: f64 = 1e-13;

/// Maximum residual accepted for the three defining identities of a group inverse.
pub const GROUP_INVERSE_TOL: f64 = 1e-8;

/// Square dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds a matrix from rows, checking squareness and finiteness.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LinalgError::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
                data.push(v);
            }
        }
        Ok(Self { n, data })
    }

    /// `e cᵀ`: every row equal to `c`.
    pub fn repeat_row(c: &[f64]) -> Self {
        let n = c.len();
        Self::from_fn(n, |_, j| c[j])
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n.max(1)).take(self.n)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "matmul order mismatch");
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n, x.len());
        self.rows()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `xᵀ A`, returned as a column vector.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n, x.len());
        let mut out = vec![0.0; self.n];
        for (row, &xi) in self.rows().zip(x) {
            if xi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(row) {
                *o += xi * a;
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.n, other.n, "order mismatch");
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.rows()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.sub(other).max_abs()
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

// ── compensated arithmetic ───────────────────────────────────────────────

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Accumulator carrying a double-length running sum.
#[derive(Default, Clone, Copy)]
struct Compensated {
    hi: f64,
    lo: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let (s, e) = two_sum(self.hi, v);
        self.hi = s;
        self.lo += e;
    }

    fn add_prod(&mut self, a: f64, b: f64) {
        let (p, e) = two_prod(a, b);
        self.add(p);
        self.lo += e;
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

// ── LU ───────────────────────────────────────────────────────────────────

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factors `a`; fails when a pivot drops below `1e-13·‖a‖∞`.
    pub fn factor(a: &Matrix) -> Result<Self, LinalgError> {
        let n = a.order();
        let threshold = PIVOT_RTOL * a.norm_inf().max(f64::MIN_POSITIVE);
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot >= threshold) {
                return Err(LinalgError::Singular {
                    column: k,
                    pivot,
                    threshold,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        // Aᵀ = Uᵀ Lᵀ P
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[j * n + i] * y[j];
            }
            y[i] = s / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lu[j * n + i] * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// `A⁻¹`, column by column.
    pub fn inverse(&self) -> Matrix {
        let n = self.n;
        let mut inv = Matrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv[(i, j)] = v;
            }
        }
        inv
    }
}

/// Solves `a x = b` with one step of iterative refinement.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if b.len() != a.order() {
        return Err(LinalgError::Dimension {
            expected: a.order(),
            got: b.len(),
        });
    }
    let lu = Lu::factor(a)?;
    let mut x = lu.solve(b);
    let r: Vec<f64> = a
        .rows()
        .zip(b)
        .map(|(row, &bi)| {
            let mut acc = Compensated::default();
            acc.add(bi);
            for (&aij, &xj) in row.iter().zip(&x) {
                acc.add_prod(-aij, xj);
            }
            acc.value()
        })
        .collect();
    for (xi, di) in x.iter_mut().zip(lu.solve(&r)) {
        *xi += di;
    }
    Ok(x)
}

/// Solves `a X = b` for a square right-hand side matrix.
pub fn solve_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if b.order() != a.order() {
        return Err(LinalgError::Dimension {
            expected: a.order(),
            got: b.order(),
        });
    }
    let lu = Lu::factor(a)?;
    let n = a.order();
    let bt = b.transpose();
    let mut out = Matrix::zeros(n);
    for j in 0..n {
        let col = lu.solve(bt.row(j));
        for (i, v) in col.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Which side the resolvent acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `(I − γP) x = b`
    Right,
    /// `xᵀ (I − γP) = bᵀ`, i.e. `(I − γPᵀ) x = b`
    Left,
}

const REFINEMENT_STEPS: usize = 4;

/// Solves the resolvent system `(I − γP) x = b` (or its transpose).
///
/// Residuals are evaluated as `b − x + γ·P x` in compensated arithmetic from
/// the original `γ` and `P`, never from the rounded matrix `I − γP`.
pub fn resolvent_solve(p: &Matrix, gamma: f64, b: &[f64], side: Side) -> Result<Vec<f64>, LinalgError> {
    let n = p.order();
    if b.len() != n {
        return Err(LinalgError::Dimension {
            expected: n,
            got: b.len(),
        });
    }
    let a = Matrix::identity(n).sub(&p.scale(gamma));
    let lu = Lu::factor(&a)?;
    let apply = |rhs: &[f64]| match side {
        Side::Right => lu.solve(rhs),
        Side::Left => lu.solve_transpose(rhs),
    };
    let mut x = apply(b);
    for _ in 0..REFINEMENT_STEPS {
        let r = resolvent_residual(p, gamma, b, &x, side);
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rmax <= f64::EPSILON * 1e-2 * scale {
            break;
        }
        for (xi, di) in x.iter_mut().zip(apply(&r)) {
            *xi += di;
        }
    }
    Ok(x)
}

fn resolvent_residual(p: &Matrix, gamma: f64, b: &[f64], x: &[f64], side: Side) -> Vec<f64> {
    let n = p.order();
    (0..n)
        .map(|i| {
            let mut px = Compensated::default();
            match side {
                Side::Right => {
                    for (&pij, &xj) in p.row(i).iter().zip(x) {
                        px.add_prod(pij, xj);
                    }
                }
                Side::Left => {
                    for (j, &xj) in x.iter().enumerate() {
                        px.add_prod(p[(j, i)], xj);
                    }
                }
            }
            let mut acc = Compensated::default();
            acc.add(b[i]);
            acc.add(-x[i]);
            acc.add_prod(gamma, px.hi);
            acc.add_prod(gamma, px.lo);
            acc.value()
        })
        .collect()
}

// ── Markov-chain kernels ─────────────────────────────────────────────────

/// Stationary distribution of a row-stochastic matrix with one recurrent class.
///
/// Solves `(I − Pᵀ) d = 0` with the last equation replaced by `Σ d = 1`.
pub fn stationary_distribution(p: &Matrix) -> Result<Vec<f64>, LinalgError> {
    let n = p.order();
    let mut a = Matrix::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 } - p[(j, i)]);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let mut d = solve(&a, &b)?;
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-9 {
        return Err(LinalgError::InvalidStationary {
            min,
            residual: stationarity_residual(p, &d),
        });
    }
    for v in d.iter_mut() {
        *v = v.max(0.0);
    }
    let s: f64 = d.iter().sum();
    d.iter_mut().for_each(|v| *v /= s);
    Ok(d)
}

/// `‖dᵀP − dᵀ‖₁`
pub fn stationarity_residual(p: &Matrix, d: &[f64]) -> f64 {
    p.vec_mul(d).iter().zip(d).map(|(a, b)| (a - b).abs()).sum()
}

/// Group inverse `D` of `A = I − P` together with the residuals of its
/// defining identities `ADA = A`, `DAD = D`, `AD = DA`.
#[derive(Debug, Clone)]
pub struct GroupInverseResult {
    pub d_matrix: Matrix,
    pub residuals: [f64; 3],
}

impl GroupInverseResult {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// Max-abs residuals of `ADA − A`, `DAD − D`, `AD − DA` for `A = I − P`.
pub fn group_inverse_residuals(p: &Matrix, d: &Matrix) -> [f64; 3] {
    let a = Matrix::identity(p.order()).sub(p);
    let ad = a.matmul(d);
    let da = d.matmul(&a);
    [
        ad.matmul(&a).max_abs_diff(&a),
        d.matmul(&a).matmul(d).max_abs_diff(d),
        ad.max_abs_diff(&da),
    ]
}

/// `D = (I − P + e dᵀ)⁻¹ − e dᵀ`.
///
/// Requires `P` to have a single recurrent class and `stationary` to be its
/// stationary distribution; otherwise the fundamental matrix is singular.
pub fn group_inverse(p: &Matrix, stationary: &[f64]) -> Result<GroupInverseResult, LinalgError> {
    let n = p.order();
    if stationary.len() != n {
        return Err(LinalgError::Dimension {
            expected: n,
            got: stationary.len(),
        });
    }
    let edt = Matrix::repeat_row(stationary);
    let z = Matrix::identity(n).sub(p).add(&edt);
    let d = Lu::factor(&z)?.inverse().sub(&edt);
    let residuals = group_inverse_residuals(p, &d);
    Ok(GroupInverseResult {
        d_matrix: d,
        residuals,
    })
}

/// `|λ₂|` of a stochastic matrix and whether the eigen-solver converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubdominantModulus {
    pub modulus: f64,
    pub converged: bool,
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Spectral radius of the deflated matrix `P − e dᵀ`, whose spectrum is
/// `{0, λ₂, …, λₙ}`.
pub fn subdominant_modulus(p: &Matrix, stationary: &[f64]) -> SubdominantModulus {
    let b = p.sub(&Matrix::repeat_row(stationary));
    if b.order() == 0 {
        return SubdominantModulus {
            modulus: 0.0,
            converged: true,
        };
    }
    match nalgebra::Schur::try_new(b.to_nalgebra(), f64::EPSILON, SCHUR_MAX_ITER) {
        Some(schur) => {
            let modulus = schur
                .complex_eigenvalues()
                .iter()
                .map(|c| c.re.hypot(c.im))
                .fold(0.0, f64::max);
            SubdominantModulus {
                modulus,
                converged: true,
            }
        }
        None => SubdominantModulus {
            modulus: gelfand_estimate(&b),
            converged: false,
        },
    }
}

/// `‖B^(2^k)‖^(1/2^k)` by repeated squaring, renormalising to avoid underflow.
fn gelfand_estimate(b: &Matrix) -> f64 {
    let mut m = b.clone();
    let mut log_scale = 0.0;
    let mut power = 1.0;
    for _ in 0..12 {
        let norm = m.norm_inf();
        if norm == 0.0 {
            return 0.0;
        }
        m = m.scale(1.0 / norm);
        log_scale += norm.ln() / power;
        m = m.matmul(&m);
        power *= 2.0;
    }
    (log_scale + m.norm_inf().ln() / power).exp()
}
