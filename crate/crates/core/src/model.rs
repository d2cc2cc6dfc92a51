//! Shared data types: the regression dataset, support sets and fitted estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

/// Tolerance used to decide whether a design is standardized.
pub const STANDARDIZATION_TOL: f64 = 1e-10;

/// Fixed design `x` (`n x p`, row-major) with response `y`, plus optional simulation truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset<T> {
    x: Matrix<T>,
    y: Vec<T>,
    beta_true: Option<Vec<T>>,
    sigma_true: Option<T>,
    standardized: bool,
}

impl<T: Real> RegressionDataset<T> {
    /// Validates dimensions and finiteness and records whether `x` is standardized.
    pub fn new(x: Matrix<T>, y: Vec<T>) -> Result<Self> {
        validate_dataset(x, y, None, None)
    }

    pub fn with_truth(self, beta_true: Vec<T>, sigma_true: Option<T>) -> Result<Self> {
        validate_dataset(self.x, self.y, Some(beta_true), sigma_true)
    }

    #[inline]
    pub fn x(&self) -> &Matrix<T> {
        &self.x
    }

    #[inline]
    pub fn y(&self) -> &[T] {
        &self.y
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn beta_true(&self) -> Option<&[T]> {
        self.beta_true.as_deref()
    }

    pub fn sigma_true(&self) -> Option<T> {
        self.sigma_true
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Same design, new response. Truth is kept.
    pub fn with_response(&self, y: Vec<T>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} entries, design has {} rows",
                y.len(),
                self.n()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: self.p() });
        }
        Ok(Self {
            x: self.x.clone(),
            y,
            beta_true: self.beta_true.clone(),
            sigma_true: self.sigma_true,
            standardized: self.standardized,
        })
    }

    /// Rows `rows` (repeats allowed) of both design and response.
    pub fn subset_rows(&self, rows: &[usize]) -> Self {
        let x = self.x.select_rows(rows);
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let standardized = is_standardized(&x);
        Self {
            x,
            y,
            beta_true: self.beta_true.clone(),
            sigma_true: self.sigma_true,
            standardized,
        }
    }

    pub fn predict(&self, beta: &[T]) -> Vec<T> {
        predict(&self.x, beta)
    }

    /// `y - X beta`.
    pub fn residuals(&self, beta: &[T]) -> Vec<T> {
        self.predict(beta)
            .iter()
            .zip(&self.y)
            .map(|(&f, &y)| y - f)
            .collect()
    }
}

/// `X beta`, skipping zero coefficients.
pub fn predict<T: Real>(x: &Matrix<T>, beta: &[T]) -> Vec<T> {
    let nz: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != T::zero()).collect();
    (0..x.nrows())
        .map(|i| {
            let r = x.row(i);
            nz.iter().map(|&j| r[j] * beta[j]).sum()
        })
        .collect()
}

/// Checks shapes and finiteness and computes the standardization flag.
pub fn validate_dataset<T: Real>(
    x: Matrix<T>,
    y: Vec<T>,
    beta_true: Option<Vec<T>>,
    sigma_true: Option<T>,
) -> Result<RegressionDataset<T>> {
    let (n, p) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if p < 1 {
        return Err(Error::DimensionMismatch("design has no columns".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "response has {} entries, design has {n} rows",
            y.len()
        )));
    }
    if let Some(b) = &beta_true {
        if b.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "beta_true has {} entries, design has {p} columns",
                b.len()
            )));
        }
    }
    for i in 0..n {
        if let Some(j) = x.row(i).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: j });
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: p });
    }
    if let Some(s) = sigma_true {
        if !(s >= T::zero()) || !s.is_finite() {
            return Err(Error::InvalidConfig(format!("sigma_true must be >= 0, got {s}")));
        }
    }
    let standardized = is_standardized(&x);
    Ok(RegressionDataset {
        x,
        y,
        beta_true,
        sigma_true,
        standardized,
    })
}

fn column_moments<T: Real>(x: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let n = T::from_usize_lossy(x.nrows());
    let p = x.ncols();
    let mut mean = vec![T::zero(); p];
    for i in 0..x.nrows() {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut second = vec![T::zero(); p];
    for i in 0..x.nrows() {
        for ((s, &v), &m) in second.iter_mut().zip(x.row(i)).zip(&mean) {
            *s = *s + (v - m) * (v - m);
        }
    }
    second.iter_mut().for_each(|s| *s = *s / n);
    (mean, second)
}

/// Mean zero and `(1/n) sum_i x_ij^2 = 1` for every column, within [`STANDARDIZATION_TOL`].
pub fn is_standardized<T: Real>(x: &Matrix<T>) -> bool {
    let n = T::from_usize_lossy(x.nrows());
    let tol = T::lit(STANDARDIZATION_TOL).max(T::epsilon() * T::lit(64.0));
    let p = x.ncols();
    let mut sum = vec![T::zero(); p];
    let mut sq = vec![T::zero(); p];
    for i in 0..x.nrows() {
        for ((s, q), &v) in sum.iter_mut().zip(sq.iter_mut()).zip(x.row(i)) {
            *s = *s + v;
            *q = *q + v * v;
        }
    }
    sum.iter()
        .zip(&sq)
        .all(|(&s, &q)| (s / n).abs() <= tol && (q / n - T::one()).abs() <= tol)
}

/// Affine map applied by [`standardize`]: `x_std = (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization<T> {
    pub means: Vec<T>,
    pub scales: Vec<T>,
    /// Mean removed from the response; zero unless the intercept option was requested.
    pub response_mean: T,
}

impl<T: Real> Standardization<T> {
    /// Applies the same transform to new rows (e.g. a test set).
    pub fn apply(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns, transform fitted on {}",
                x.ncols(),
                self.means.len()
            )));
        }
        Ok(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.means[j]) / self.scales[j]
        }))
    }

    /// Maps coefficients fitted on the standardized scale back to the original predictors.
    /// Returns `(beta_original, intercept)` such that
    /// `x_orig * beta_original + intercept == x_std * beta + response_mean`.
    pub fn to_original(&self, beta: &[T]) -> (Vec<T>, T) {
        let b: Vec<T> = beta
            .iter()
            .zip(&self.scales)
            .map(|(&bj, &s)| bj / s)
            .collect();
        let shift = dot(&b, &self.means);
        (b, self.response_mean - shift)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardizeOptions {
    /// Center the response and report its mean as an intercept.
    pub intercept: bool,
}

/// Centers every column and scales it to `(1/n) sum x_ij^2 = 1`.
pub fn standardize<T: Real>(
    ds: &RegressionDataset<T>,
    options: StandardizeOptions,
) -> Result<(RegressionDataset<T>, Standardization<T>)> {
    let (means, second) = column_moments(&ds.x);
    let max_abs: Vec<T> = (0..ds.p())
        .map(|j| {
            (0..ds.n())
                .map(|i| ds.x[(i, j)].abs())
                .fold(T::zero(), T::max)
        })
        .collect();
    let mut scales = Vec::with_capacity(ds.p());
    for j in 0..ds.p() {
        let s = second[j].sqrt();
        // Relative to the column magnitude so that constant columns are caught despite rounding.
        if !(s > T::epsilon() * T::lit(16.0) * max_abs[j]) || s == T::zero() {
            return Err(Error::ZeroVarianceColumn(j));
        }
        scales.push(s);
    }
    let x = Matrix::from_fn(ds.n(), ds.p(), |i, j| (ds.x[(i, j)] - means[j]) / scales[j]);
    let response_mean = if options.intercept {
        ds.y.iter().copied().sum::<T>() / T::from_usize_lossy(ds.n())
    } else {
        T::zero()
    };
    let y = ds.y.iter().map(|&v| v - response_mean).collect();
    let transform = Standardization {
        means,
        scales,
        response_mean,
    };
    let out = validate_dataset(x, y, ds.beta_true.clone(), ds.sigma_true)?;
    Ok((out, transform))
}

/// Strictly increasing column indices, all below `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportSet {
    indices: Vec<usize>,
    p: usize,
}

impl SupportSet {
    /// Sorts and deduplicates; fails if any index is out of range.
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&j| j >= p) {
            return Err(Error::DimensionMismatch(format!(
                "support index {bad} out of range for p = {p}"
            )));
        }
        Ok(Self { indices, p })
    }

    /// Like [`SupportSet::new`] but also enforces `|S| <= min(n, p)` for second-stage use.
    pub fn for_second_stage(indices: Vec<usize>, n: usize, p: usize) -> Result<Self> {
        let s = Self::new(indices, p)?;
        if s.len() > n.min(p) {
            return Err(Error::DimensionMismatch(format!(
                "support of size {} exceeds min(n, p) = {}",
                s.len(),
                n.min(p)
            )));
        }
        Ok(s)
    }

    pub fn empty(p: usize) -> Self {
        Self { indices: Vec::new(), p }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// Indices in `0..p` not in the support.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| !self.contains(j)).collect()
    }

    pub fn is_superset_of(&self, other: &SupportSet) -> bool {
        other.indices.iter().all(|&j| self.contains(j))
    }
}

/// Result of a single Lasso fit, with its optimality certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit<T> {
    pub beta: Vec<T>,
    /// Penalty on the `||y - X b||^2 + lambda ||b||_1` scale.
    pub lambda: T,
    /// Coordinate-descent sweeps performed (working-set and full sweeps).
    pub n_iters: usize,
    /// Maximum KKT residual at `beta`, recomputed from a fresh residual.
    pub kkt_violation: T,
    pub objective: T,
}

impl<T: Real> LassoFit<T> {
    pub fn support(&self) -> SupportSet {
        let idx = (0..self.beta.len())
            .filter(|&j| self.beta[j] != T::zero())
            .collect();
        SupportSet {
            indices: idx,
            p: self.beta.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Modified least squares: hard-thresholded SVD inverse on the support.
    Mls,
    Ridge,
    Ols,
    /// No second stage; the selection-stage Lasso coefficients themselves.
    Lasso,
}

/// Second-stage estimate on a selected support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageEstimate<T> {
    pub support: SupportSet,
    /// Length `p`; exactly zero outside `support`.
    pub beta: Vec<T>,
    pub kind: EstimatorKind,
    /// Singular-value threshold (mLS only, zero otherwise).
    pub tau: T,
    /// Ridge penalty (Ridge only, zero otherwise).
    pub mu: T,
    /// Number of singular values kept (mLS only; `|S|` for OLS).
    pub kept_rank: usize,
    /// Selection-stage penalty, when the selection stage was a single Lasso fit.
    pub lambda: Option<T>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[Vec<f64>], y: Vec<f64>) -> Result<RegressionDataset<f64>> {
        RegressionDataset::new(Matrix::from_rows(rows)?, y)
    }

    #[test]
    fn accepts_well_formed() {
        let d = ds(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 7.0]], vec![1.0, 2.0, 3.0]);
        assert!(d.is_ok());
    }

    #[test]
    fn rejects_length_mismatch() {
        let d = ds(
            &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 7.0]],
            vec![1.0, 2.0, 3.0, 4.0],
        );
        assert!(matches!(d, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rejects_nan() {
        let d = ds(
            &[vec![1.0, 2.0], vec![f64::NAN, 4.0], vec![5.0, 7.0]],
            vec![1.0, 2.0, 3.0],
        );
        assert_eq!(d.unwrap_err(), Error::NonFinite { row: 1, col: 0 });
    }

    #[test]
    fn standardizes_one_two_three() {
        let d = ds(&[vec![1.0], vec![2.0], vec![3.0]], vec![0.0, 1.0, 0.0]).unwrap();
        let (s, t) = standardize(&d, StandardizeOptions::default()).unwrap();
        let col = s.x().column(0);
        let mean: f64 = col.iter().sum::<f64>() / 3.0;
        let msq: f64 = col.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-10);
        assert!((msq - 1.0).abs() < 1e-10);
        assert!(s.is_standardized());
        assert_eq!(t.means, vec![2.0]);
    }

    #[test]
    fn constant_column_rejected() {
        let d = ds(
            &[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]],
            vec![0.0, 1.0, 0.0],
        )
        .unwrap();
        assert_eq!(
            standardize(&d, StandardizeOptions::default()).unwrap_err(),
            Error::ZeroVarianceColumn(1)
        );
    }

    #[test]
    fn standardize_is_idempotent() {
        let d = ds(
            &[vec![1.0, -2.0], vec![2.0, 0.5], vec![4.0, 3.0], vec![0.0, 1.0]],
            vec![0.0, 1.0, 0.0, 2.0],
        )
        .unwrap();
        let (s1, _) = standardize(&d, StandardizeOptions::default()).unwrap();
        let (s2, _) = standardize(&s1, StandardizeOptions::default()).unwrap();
        for (a, b) in s1.x().as_slice().iter().zip(s2.x().as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn coefficients_map_back_to_original_scale() {
        let d = ds(
            &[vec![1.0, -2.0], vec![2.0, 0.5], vec![4.0, 3.0], vec![0.0, 1.0]],
            vec![0.0, 1.0, 0.0, 2.0],
        )
        .unwrap();
        for intercept in [false, true] {
            let (s, t) = standardize(&d, StandardizeOptions { intercept }).unwrap();
            let beta = vec![0.7, -1.3];
            let pred_std: Vec<f64> = s
                .predict(&beta)
                .iter()
                .map(|v| v + t.response_mean)
                .collect();
            let (b0, c) = t.to_original(&beta);
            let pred_orig: Vec<f64> = d.predict(&b0).iter().map(|v| v + c).collect();
            for (a, b) in pred_std.iter().zip(&pred_orig) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn support_set_sorts_and_checks_range() {
        let s = SupportSet::new(vec![3, 1, 3], 5).unwrap();
        assert_eq!(s.indices(), &[1, 3]);
        assert_eq!(s.complement(), vec![0, 2, 4]);
        assert!(SupportSet::new(vec![5], 5).is_err());
        assert!(SupportSet::for_second_stage(vec![0, 1, 2], 2, 5).is_err());
    }
}
