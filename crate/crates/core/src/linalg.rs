//! Small dense linear algebra kernel: a row-major matrix, Cholesky factorization, a cyclic
//! Jacobi symmetric eigensolver and a one-sided Jacobi thin SVD.
//!
//! Problems handled here are either tall-and-thin (`n x |S|` second stages) or small square
//! Gram matrices, which is where Jacobi methods are accurate and fast enough.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
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

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |i, k| self[(i, cols[k])])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self^T * v`.
    pub fn t_matvec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == T::zero() {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o = *o + x * vi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
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
                let orow = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(orow) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * self`.
    pub fn gram(&self) -> Self {
        let p = self.cols;
        let mut g = Self::zeros(p, p);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..p {
                let ra = r[a];
                if ra == T::zero() {
                    continue;
                }
                for b in a..p {
                    g.data[a * p + b] = g.data[a * p + b] + ra * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g.data[a * p + b] = g.data[b * p + a];
            }
        }
        g
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    // Fixed accumulation order (four lanes, then the tail) keeps results reproducible.
    let mut acc = [T::zero(); 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] = acc[0] + x[0] * y[0];
        acc[1] = acc[1] + x[1] * y[1];
        acc[2] = acc[2] + x[2] * y[2];
        acc[3] = acc[3] + x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (&x, &y) in ra.iter().zip(rb) {
        s = s + x * y;
    }
    s
}

#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

pub fn norm_sq<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    /// Fails with `SingularSystem` when a pivot is not safely positive, i.e. below
    /// `n * eps * max_diag`.
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch("Cholesky of a non-square matrix".into()));
        }
        let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(T::zero(), T::max);
        let floor = T::from_usize_lossy(n.max(1)) * T::epsilon() * max_diag;
        let (l, stop) = factor_lower(a, |_, s| s > floor);
        match stop {
            None => Ok(Self { l }),
            Some((j, s)) => Err(Error::SingularSystem(format!(
                "pivot {j} is {s} (floor {floor})"
            ))),
        }
    }

    /// Factorizes `a` or, when column `k` is numerically in the span of columns `0..k`
    /// (pivot at most `rel_tol * a[k, k]`), returns a vector `d` of length `k + 1` with
    /// `d[k] = -1` and `a[..=k, ..=k] d ~ 0`.
    pub fn new_or_null(a: &Matrix<T>, rel_tol: T) -> Result<std::result::Result<Self, Vec<T>>> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch("Cholesky of a non-square matrix".into()));
        }
        let (l, stop) = factor_lower(a, |i, s| s > rel_tol * a[(i, i)]);
        let Some((k, _)) = stop else {
            return Ok(Ok(Self { l }));
        };
        let lead = Self {
            l: Matrix::from_fn(k, k, |i, j| l[(i, j)]),
        };
        let rhs: Vec<T> = (0..k).map(|i| a[(i, k)]).collect();
        let mut d = lead.solve(&rhs);
        d.push(-T::one());
        Ok(Err(d))
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.nrows();
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s = s - self.l[(k, i)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.l
    }
}

/// Row-major lower Cholesky factor of `a`, stopping at the first diagonal pivot `s` (row `i`)
/// for which `accept(i, s)` is false. Row `i` holds `L[i, 0..=i]`, so inner products are
/// contiguous.
fn factor_lower<T: Real>(
    a: &Matrix<T>,
    accept: impl Fn(usize, T) -> bool,
) -> (Matrix<T>, Option<(usize, T)>) {
    let n = a.nrows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = if i == j {
                let r = &l.data[i * n..i * n + j];
                (r, r)
            } else {
                let (head, tail) = l.data.split_at(i * n);
                (&tail[..j], &head[j * n..j * n + j])
            };
            let s = a[(i, j)] - dot(ri, rj);
            if i == j {
                if !accept(i, s) {
                    return (l, Some((i, s)));
                }
                l.data[i * n + i] = s.sqrt();
            } else {
                l.data[i * n + j] = s / l.data[j * n + j];
            }
        }
    }
    (l, None)
}

/// Cholesky factor of a Gram matrix that grows and shrinks one variable at a time.
///
/// Row `i` of the lower factor is stored with its `i + 1` leading entries.
#[derive(Debug, Clone, Default)]
pub struct UpdatableCholesky<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Real> UpdatableCholesky<T> {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a variable with cross products `g` against the current variables and squared
    /// norm `diag`. When the new variable is numerically in the span of the current ones
    /// (pivot at most `rel_tol * diag`), the factor is left unchanged and the returned error
    /// holds `d` of length `len() + 1` with `d[len()] = -1` and `G d ~ 0`.
    pub fn append(&mut self, g: &[T], diag: T, rel_tol: T) -> std::result::Result<(), Vec<T>> {
        let k = self.rows.len();
        assert_eq!(g.len(), k, "cross-product vector length");
        let mut w = Vec::with_capacity(k + 1);
        for i in 0..k {
            let row = &self.rows[i];
            let s = g[i] - dot(&row[..i], &w[..i]);
            w.push(s / row[i]);
        }
        let pivot = diag - dot(&w, &w);
        if !(pivot > rel_tol * diag) {
            let mut d = self.solve_upper(&w);
            d.push(-T::one());
            return Err(d);
        }
        w.push(pivot.sqrt());
        self.rows.push(w);
        Ok(())
    }

    /// Removes the variable at position `pos`, restoring triangularity with Givens rotations.
    pub fn remove(&mut self, pos: usize) {
        self.rows.remove(pos);
        let k = self.rows.len();
        for i in pos..k {
            let a = self.rows[i][i];
            let b = self.rows[i][i + 1];
            let r = a.hypot(b);
            let (c, s) = (a / r, b / r);
            for t in i..k {
                let row = &mut self.rows[t];
                let (x, y) = (row[i], row[i + 1]);
                row[i] = c * x + s * y;
                row[i + 1] = c * y - s * x;
            }
            self.rows[i].truncate(i + 1);
        }
    }

    /// Solves `L L^T x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let k = self.rows.len();
        let mut z = Vec::with_capacity(k);
        for i in 0..k {
            let row = &self.rows[i];
            let s = b[i] - dot(&row[..i], &z[..i]);
            z.push(s / row[i]);
        }
        self.solve_upper(&z)
    }

    /// Solves `L^T x = z`.
    fn solve_upper(&self, z: &[T]) -> Vec<T> {
        let k = self.rows.len();
        let mut x = z.to_vec();
        for i in (0..k).rev() {
            x[i] = x[i] / self.rows[i][i];
            let xi = x[i];
            for (t, v) in x[..i].iter_mut().enumerate() {
                *v = *v - self.rows[i][t] * xi;
            }
        }
        x
    }
}

/// Eigendecomposition of a symmetric matrix; eigenvalues ascending, eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> SymEigen<T> {
    /// Cyclic Jacobi rotations until every off-diagonal entry is negligible.
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch("eigendecomposition of a non-square matrix".into()));
        }
        let mut m = a.clone();
        let mut v = Matrix::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..100 {
            let mut off = T::zero();
            let mut diag = T::zero();
            for i in 0..n {
                diag = diag + m[(i, i)] * m[(i, i)];
                for j in (i + 1)..n {
                    off = off + m[(i, j)] * m[(i, j)];
                }
            }
            if off <= eps * eps * diag || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[(p, q)];
                    if apq.abs() <= T::min_positive_value() {
                        continue;
                    }
                    let app = m[(p, p)];
                    let aqq = m[(q, q)];
                    let theta = (aqq - app) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| m[(i, i)]).collect();
        let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
        Ok(Self { values, vectors })
    }

    pub fn min(&self) -> Option<T> {
        self.values.first().copied()
    }
}

/// Thin singular value decomposition `A = U diag(sigma) V^T` with `U` of shape `n x d`
/// (orthonormal columns), `sigma` non-increasing and `V` orthogonal `d x d`.
#[derive(Debug, Clone, Serialize)]
pub struct ThinSvd<T> {
    pub u: Matrix<T>,
    pub singular_values: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> ThinSvd<T> {
    /// One-sided (Hestenes) Jacobi SVD. Requires `nrows >= ncols`.
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.nrows();
        let d = a.ncols();
        if n < d {
            return Err(Error::DimensionMismatch(format!(
                "thin SVD needs rows >= cols, got {n}x{d}"
            )));
        }
        // Work on columns stored contiguously.
        let mut cols: Vec<Vec<T>> = (0..d).map(|j| a.column(j)).collect();
        let mut v = Matrix::identity(d);
        let eps = T::epsilon();
        let mut norms: Vec<T> = cols.iter().map(|c| norm_sq(c)).collect();
        for _sweep in 0..80 {
            let mut rotated = false;
            for p in 0..d {
                for q in (p + 1)..d {
                    let alpha = norms[p];
                    let beta = norms[q];
                    let gamma = dot(&cols[p], &cols[q]);
                    if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                    let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    let (left, right) = cols.split_at_mut(q);
                    let cp = &mut left[p];
                    let cq = &mut right[0];
                    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                        let xp = *x;
                        let xq = *y;
                        *x = c * xp - s * xq;
                        *y = s * xp + c * xq;
                    }
                    for k in 0..d {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                    norms[p] = norm_sq(&cols[p]);
                    norms[q] = norm_sq(&cols[q]);
                }
            }
            if !rotated {
                break;
            }
        }
        let sigma: Vec<T> = norms.iter().map(|x| x.sqrt()).collect();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap_or(std::cmp::Ordering::Equal));

        let smax = order.first().map_or(T::zero(), |&i| sigma[i]);
        let tiny = T::from_usize_lossy(n.max(d)) * eps * smax;
        let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(d);
        let mut singular_values = Vec::with_capacity(d);
        for &k in &order {
            let s = sigma[k];
            singular_values.push(s);
            if s > tiny {
                u_cols.push(cols[k].iter().map(|&x| x / s).collect());
            } else {
                u_cols.push(Vec::new());
            }
        }
        complete_orthonormal(&mut u_cols, n);
        let u = Matrix::from_fn(n, d, |i, k| u_cols[k][i]);
        let v = Matrix::from_fn(d, d, |i, k| v[(i, order[k])]);
        Ok(Self {
            u,
            singular_values,
            v,
        })
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        let d = self.singular_values.len();
        let n = self.u.nrows();
        Matrix::from_fn(n, d, |i, j| {
            (0..d)
                .map(|k| self.u[(i, k)] * self.singular_values[k] * self.v[(j, k)])
                .sum()
        })
    }
}

/// Fills empty entries of `cols` with unit vectors orthogonal to all others (Gram-Schmidt on
/// the canonical basis).
fn complete_orthonormal<T: Real>(cols: &mut [Vec<T>], n: usize) {
    let mut candidate = 0usize;
    for k in 0..cols.len() {
        if !cols[k].is_empty() {
            continue;
        }
        while candidate < n {
            let mut e = vec![T::zero(); n];
            e[candidate] = T::one();
            candidate += 1;
            for _pass in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let proj = dot(&e, other);
                    axpy(-proj, other, &mut e);
                }
            }
            let norm = norm_sq(&e).sqrt();
            if norm > T::lit(1e-6) {
                cols[k] = e.iter().map(|&x| x / norm).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Matrix<f64> {
        Matrix::from_rows(&[
            vec![1.0, 2.0, 0.5],
            vec![0.0, 1.0, -1.0],
            vec![3.0, -1.0, 2.0],
            vec![1.0, 1.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn svd_reconstructs_and_is_orthonormal() {
        let a = sample();
        let svd = ThinSvd::new(&a).unwrap();
        let r = svd.reconstruct();
        for i in 0..4 {
            for j in 0..3 {
                assert!((r[(i, j)] - a[(i, j)]).abs() < 1e-12);
            }
        }
        let utu = svd.u.gram();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((utu[(i, j)] - want).abs() < 1e-12);
            }
        }
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_of_rank_deficient_matrix_completes_u() {
        let a: Matrix<f64> = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let svd = ThinSvd::new(&a).unwrap();
        assert!(svd.singular_values[1].abs() < 1e-12);
        let utu = svd.u.gram();
        assert!((utu[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(utu[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn eigen_of_two_by_two() {
        let a: Matrix<f64> = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let e = SymEigen::new(&a).unwrap();
        assert!((e.values[0] - 0.5).abs() < 1e-14);
        assert!((e.values[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn cholesky_solves_and_flags_singular() {
        let a: Matrix<f64> = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let x = Cholesky::new(&a).unwrap().solve(&[2.0, 1.0]);
        let back = a.matvec(&x);
        assert!((back[0] - 2.0).abs() < 1e-14 && (back[1] - 1.0).abs() < 1e-14);
        let s = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(Cholesky::new(&s), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn dependent_column_yields_null_vector() {
        // Third column is x0 + 2 x1.
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0, 1.0, 3.0],
            vec![0.0, 1.0, 2.0, -1.0],
            vec![1.0, 1.0, 3.0, 0.5],
            vec![2.0, -1.0, 0.0, 1.0],
        ])
        .unwrap();
        let d: Vec<f64> = match Cholesky::new_or_null(&x.gram(), 1e-12).unwrap() {
            Err(d) => d,
            Ok(_) => panic!("dependence not detected"),
        };
        assert_eq!(d.len(), 3);
        assert!((d[0] - 1.0).abs() < 1e-10 && (d[1] - 2.0).abs() < 1e-10 && d[2] == -1.0);
        let full = x.select_columns(&[0, 1, 3]).gram();
        assert!(Cholesky::new_or_null(&full, 1e-12).unwrap().is_ok());
    }

    #[test]
    fn updatable_cholesky_tracks_appends_and_removals() {
        let x = Matrix::from_fn(12, 6, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + (i == j) as u8 as f64);
        let g = x.gram();
        let mut f = UpdatableCholesky::new();
        let mut vars: Vec<usize> = Vec::new();
        let push = |f: &mut UpdatableCholesky<f64>, vars: &mut Vec<usize>, j: usize| {
            let cross: Vec<f64> = vars.iter().map(|&i| g[(i, j)]).collect();
            f.append(&cross, g[(j, j)], 1e-12).unwrap();
            vars.push(j);
        };
        for j in [3, 0, 5, 1] {
            push(&mut f, &mut vars, j);
        }
        f.remove(1);
        vars.remove(1);
        push(&mut f, &mut vars, 2);
        f.remove(0);
        vars.remove(0);
        let b: Vec<f64> = (0..vars.len()).map(|i| i as f64 - 1.0).collect();
        let sub = Matrix::from_fn(vars.len(), vars.len(), |u, v| g[(vars[u], vars[v])]);
        let expected = Cholesky::new(&sub).unwrap().solve(&b);
        for (a, e) in f.solve(&b).iter().zip(&expected) {
            assert!((a - e).abs() < 1e-9, "{a} vs {e}");
        }
    }

    #[test]
    fn updatable_cholesky_reports_dependent_column() {
        let g: Matrix<f64> = Matrix::from_rows(&[vec![2.0, 1.0, 3.0], vec![1.0, 1.0, 2.0], vec![3.0, 2.0, 5.0]]).unwrap();
        let mut f = UpdatableCholesky::new();
        f.append(&[], 2.0, 1e-12).unwrap();
        f.append(&[1.0], 1.0, 1e-12).unwrap();
        let d = f.append(&[3.0, 2.0], 5.0, 1e-12).unwrap_err();
        assert_eq!(f.len(), 2);
        let gd = g.matvec(&d);
        assert!(gd.iter().all(|v| v.abs() < 1e-12), "{gd:?}");
    }

    #[test]
    fn gram_matches_transpose_product() {
        let a = sample();
        let g = a.gram();
        let h = a.transpose().matmul(&a).unwrap();
        assert_eq!(g, h);
    }
}
