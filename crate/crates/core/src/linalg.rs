//! Dense matrix kernels: Householder QR least squares, Cholesky and LU solves.
//!
//! All instances in this crate are small (a few hundred rows at most), so
//! everything is stored densely in row-major order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is rank deficient at column {column} (|r_jj| = {value:e})")]
    RankDeficient { column: usize, value: f64 },
    #[error("matrix is not positive definite: pivot {index} = {value:e}")]
    NotPositiveDefinite { index: usize, value: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is singular at pivot {0}")]
    Singular(usize),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let m = Self { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::Dimension("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    fn check_finite(&self) -> Result<(), LinalgError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(LinalgError::NonFinite {
                row: k / self.cols.max(1),
                col: k % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::Dimension(format!(
                "matvec: {} columns, vector of length {}",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// Computes `selfᵀ x`.
    pub fn t_matvec(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        if x.len() != self.rows {
            return Err(LinalgError::Dimension(format!(
                "t_matvec: {} rows, vector of length {}",
                self.rows,
                x.len()
            )));
        }
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Householder QR factorization.
    pub fn qr(&self) -> Result<Qr<T>, LinalgError> {
        Qr::factorize(self)
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn norm_inf<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Compact Householder QR of an m×k matrix with m ≥ k.
///
/// The reflectors are stored below the diagonal of `qr`, with their leading
/// coefficients in `beta`; `R` occupies the upper triangle.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    qr: DenseMatrix<T>,
    beta: Vec<T>,
}

impl<T: Scalar> Qr<T> {
    pub fn factorize(a: &DenseMatrix<T>) -> Result<Self, LinalgError> {
        let (m, k) = (a.rows, a.cols);
        if m < k {
            return Err(LinalgError::Dimension(format!(
                "QR needs rows >= cols, got {m}x{k}"
            )));
        }
        let mut qr = a.clone();
        let mut beta = vec![T::zero(); k];
        for j in 0..k {
            let norm = (j..m).map(|i| qr[(i, j)] * qr[(i, j)]).sum::<T>().sqrt();
            if norm == T::zero() {
                continue;
            }
            let alpha = if qr[(j, j)] > T::zero() { -norm } else { norm };
            // v = x - alpha e1, scaled so that v[0] = 1
            let v0 = qr[(j, j)] - alpha;
            for i in (j + 1)..m {
                qr[(i, j)] /= v0;
            }
            beta[j] = -v0 / alpha;
            qr[(j, j)] = alpha;
            for c in (j + 1)..k {
                let mut s = qr[(j, c)];
                for i in (j + 1)..m {
                    s += qr[(i, j)] * qr[(i, c)];
                }
                s *= beta[j];
                qr[(j, c)] -= s;
                for i in (j + 1)..m {
                    let vij = qr[(i, j)];
                    qr[(i, c)] -= s * vij;
                }
            }
        }
        Ok(Self { qr, beta })
    }

    /// Applies `Qᵀ` to `b` in place.
    pub fn apply_qt(&self, b: &mut [T]) {
        let (m, k) = (self.qr.rows, self.qr.cols);
        for j in 0..k {
            let mut s = b[j];
            for i in (j + 1)..m {
                s += self.qr[(i, j)] * b[i];
            }
            s *= self.beta[j];
            b[j] -= s;
            for i in (j + 1)..m {
                b[i] -= s * self.qr[(i, j)];
            }
        }
    }

    /// Applies `Q` to `b` in place.
    pub fn apply_q(&self, b: &mut [T]) {
        let (m, k) = (self.qr.rows, self.qr.cols);
        for j in (0..k).rev() {
            let mut s = b[j];
            for i in (j + 1)..m {
                s += self.qr[(i, j)] * b[i];
            }
            s *= self.beta[j];
            b[j] -= s;
            for i in (j + 1)..m {
                b[i] -= s * self.qr[(i, j)];
            }
        }
    }

    /// The full m×m orthogonal factor.
    pub fn q(&self) -> DenseMatrix<T> {
        let m = self.qr.rows;
        let mut q = DenseMatrix::zeros(m, m);
        let mut e = vec![T::zero(); m];
        for c in 0..m {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[c] = T::one();
            self.apply_q(&mut e);
            for r in 0..m {
                q[(r, c)] = e[r];
            }
        }
        q
    }

    /// The k×k upper triangular factor.
    pub fn r(&self) -> DenseMatrix<T> {
        let k = self.qr.cols;
        DenseMatrix::from_fn(k, k, |i, j| if j >= i { self.qr[(i, j)] } else { T::zero() })
    }

    pub fn check_rank(&self, rel_tol: T) -> Result<(), LinalgError> {
        let k = self.qr.cols;
        let largest = (0..k).fold(T::zero(), |m, j| m.max(self.qr[(j, j)].abs()));
        for j in 0..k {
            let d = self.qr[(j, j)].abs();
            if d <= rel_tol * largest || largest == T::zero() {
                return Err(LinalgError::RankDeficient {
                    column: j,
                    value: d.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }

    pub fn solve_least_squares(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let (m, k) = (self.qr.rows, self.qr.cols);
        if b.len() != m {
            return Err(LinalgError::Dimension(format!(
                "rhs of length {} for {m} rows",
                b.len()
            )));
        }
        self.check_rank(T::from_f64_lossy(1e-10))?;
        let mut qtb = b.to_vec();
        self.apply_qt(&mut qtb);
        let mut x = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut s = qtb[i];
            for j in (i + 1)..k {
                s -= self.qr[(i, j)] * x[j];
            }
            x[i] = s / self.qr[(i, i)];
        }
        Ok(x)
    }
}

/// Solves `min ‖A x − b‖₂` through Householder QR.
pub fn least_squares<T: Scalar>(a: &DenseMatrix<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    a.check_finite()?;
    Qr::factorize(a)?.solve_least_squares(b)
}

/// Cholesky factor `L` (lower triangular, row-major) of a symmetric positive
/// definite matrix.
pub fn cholesky<T: Scalar>(s: &DenseMatrix<T>) -> Result<DenseMatrix<T>, LinalgError> {
    let n = s.rows;
    if s.cols != n {
        return Err(LinalgError::Dimension(format!(
            "cholesky of a {}x{} matrix",
            s.rows, s.cols
        )));
    }
    let mut asym = T::zero();
    let mut scale = T::zero();
    for i in 0..n {
        for j in 0..n {
            asym = asym.max((s[(i, j)] - s[(j, i)]).abs());
            scale = scale.max(s[(i, j)].abs());
        }
    }
    if asym > T::from_f64_lossy(1e-10) * scale.max(T::one()) {
        return Err(LinalgError::NotSymmetric(asym.to_f64_lossy()));
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= T::zero() || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite {
                index: j,
                value: d.to_f64_lossy(),
            });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(l)
}

/// Solves `S x = r` for symmetric positive definite `S`.
pub fn cholesky_solve<T: Scalar>(s: &DenseMatrix<T>, r: &[T]) -> Result<Vec<T>, LinalgError> {
    let n = s.rows;
    if r.len() != n {
        return Err(LinalgError::Dimension(format!(
            "rhs of length {} for a {n}x{n} system",
            r.len()
        )));
    }
    let l = cholesky(s)?;
    let mut z = r.to_vec();
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            let zk = z[k];
            z[i] -= lik * zk;
        }
        z[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let lki = l[(k, i)];
            let zk = z[k];
            z[i] -= lki * zk;
        }
        z[i] /= l[(i, i)];
    }
    Ok(z)
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factorize(a: &DenseMatrix<T>) -> Result<Self, LinalgError> {
        let n = a.rows;
        if a.cols != n {
            return Err(LinalgError::Dimension(format!(
                "LU of a {}x{} matrix",
                a.rows, a.cols
            )));
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = norm_inf(&lu.data).max(T::one());
        let tiny = T::from_f64_lossy(1e-14) * scale;
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= tiny {
                return Err(LinalgError::Singular(k));
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    lu.data.swap(p * n + j, k * n + j);
                }
            }
            let d = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / d;
                if f == T::zero() {
                    continue;
                }
                lu[(i, k)] = f;
                for j in (k + 1)..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= f * v;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] = x[i] - self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] = x[i] - self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Solves a general square system with partial pivoting.
pub fn lu_solve<T: Scalar>(a: &DenseMatrix<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    if b.len() != a.rows {
        return Err(LinalgError::Dimension(format!(
            "rhs of length {} for {} rows",
            b.len(),
            a.rows
        )));
    }
    Ok(Lu::factorize(a)?.solve(b))
}

/// Explicit inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>, LinalgError> {
    let n = a.rows;
    if a.cols != n {
        return Err(LinalgError::Dimension("inverse of a non-square matrix".into()));
    }
    let mut m = a.clone();
    let mut inv = DenseMatrix::identity(n);
    let scale = norm_inf(&m.data).max(T::one());
    let tiny = T::from_f64_lossy(1e-13) * scale;
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= tiny {
            return Err(LinalgError::Singular(k));
        }
        if p != k {
            for j in 0..n {
                m.data.swap(p * n + j, k * n + j);
                inv.data.swap(p * n + j, k * n + j);
            }
        }
        let d = m[(k, k)];
        for j in 0..n {
            m[(k, j)] /= d;
            inv[(k, j)] /= d;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            let f = m[(i, k)];
            if f == T::zero() {
                continue;
            }
            for j in 0..n {
                let mk = m[(k, j)];
                let ik = inv[(k, j)];
                m[(i, j)] -= f * mk;
                inv[(i, j)] -= f * ik;
            }
        }
    }
    Ok(inv)
}
