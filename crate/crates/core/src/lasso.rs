//! Coordinate-descent Lasso on the objective `||y - X b||^2 + lambda ||b||_1`.
//!
//! The common "scaled" convention `(1/2n) ||y - X b||^2 + lambda_s ||b||_1` maps to this one
//! through `lambda = 2 n lambda_s`.
//!
//! Convergence is certified by the maximum KKT residual, recomputed from a fresh residual
//! before a fit is returned; an unconverged fit is an error, never a result.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix, UpdatableCholesky};
use crate::model::{LassoFit, RegressionDataset};
use crate::rng::{stream_rng, Stream};
use crate::scalar::{sign, soft_threshold, Real};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
pub const DEFAULT_N_LAMBDA: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions<T> {
    /// Required maximum KKT residual (absolute, on the unscaled objective).
    pub tol: T,
    /// Maximum number of coordinate sweeps.
    pub max_iters: usize,
}

impl<T: Real> Default for LassoOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(DEFAULT_TOL),
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

/// Column-major copy of a design with cached squared column norms.
///
/// Building one costs a copy of `X`; reuse it when many fits share a design (paths,
/// bootstrap replicates).
#[derive(Debug, Clone)]
pub struct Design<T> {
    n: usize,
    p: usize,
    cols: Vec<T>,
    sq_norms: Vec<T>,
}

impl<T: Real> Design<T> {
    pub fn new(x: &Matrix<T>) -> Self {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        Self::from_rows(x, &rows)
    }

    /// Design restricted to `rows` (repeats allowed).
    pub fn from_rows(x: &Matrix<T>, rows: &[usize]) -> Self {
        let n = rows.len();
        let p = x.ncols();
        let mut cols = vec![T::zero(); n * p];
        for (ii, &i) in rows.iter().enumerate() {
            for (j, &v) in x.row(i).iter().enumerate() {
                cols[j * n + ii] = v;
            }
        }
        Self::from_col_major(n, p, cols)
    }

    /// Same design with column `j` multiplied by `weights[j]`.
    pub fn scaled(&self, weights: &[T]) -> Self {
        assert_eq!(weights.len(), self.p);
        let mut cols = self.cols.clone();
        for (j, &w) in weights.iter().enumerate() {
            cols[j * self.n..(j + 1) * self.n]
                .iter_mut()
                .for_each(|v| *v = *v * w);
        }
        Self::from_col_major(self.n, self.p, cols)
    }

    fn from_col_major(n: usize, p: usize, cols: Vec<T>) -> Self {
        let sq_norms = (0..p)
            .map(|j| {
                let c = &cols[j * n..(j + 1) * n];
                dot(c, c)
            })
            .collect();
        Self {
            n,
            p,
            cols,
            sq_norms,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    /// `X^T v`.
    pub fn t_matvec(&self, v: &[T]) -> Vec<T> {
        (0..self.p).map(|j| dot(self.col(j), v)).collect()
    }

    /// `y - X beta`.
    pub fn residual(&self, y: &[T], beta: &[T]) -> Vec<T> {
        let mut r = y.to_vec();
        for (j, &b) in beta.iter().enumerate() {
            if b != T::zero() {
                axpy(-b, self.col(j), &mut r);
            }
        }
        r
    }
}

/// KKT residual of coordinate `j` given `g2 = 2 X_j^T (y - X beta)`.
#[inline]
fn coord_violation<T: Real>(g2: T, b: T, lambda: T) -> T {
    if b != T::zero() {
        (g2 - lambda * sign(b)).abs()
    } else {
        (g2.abs() - lambda).max(T::zero())
    }
}

fn max_violation<T: Real>(grad: &[T], beta: &[T], lambda: T) -> T {
    let two = T::lit(2.0);
    grad.iter()
        .zip(beta)
        .map(|(&g, &b)| coord_violation(two * g, b, lambda))
        .fold(T::zero(), T::max)
}

fn objective_of<T: Real>(r: &[T], beta: &[T], lambda: T) -> T {
    dot(r, r) + lambda * beta.iter().map(|b| b.abs()).sum::<T>()
}

/// `max_j v_j` with `v_j = |2 X_j^T (y - X beta) - lambda sign(beta_j)|` on the support and
/// `max(0, |2 X_j^T (y - X beta)| - lambda)` off it.
pub fn kkt_max_violation<T: Real>(ds: &RegressionDataset<T>, beta: &[T], lambda: T) -> T {
    let r = ds.residuals(beta);
    let grad = ds.x().t_matvec(&r);
    max_violation(&grad, beta, lambda)
}

/// `||y - X beta||^2 + lambda ||beta||_1`.
pub fn lasso_objective<T: Real>(ds: &RegressionDataset<T>, beta: &[T], lambda: T) -> T {
    objective_of(&ds.residuals(beta), beta, lambda)
}

/// Smallest penalty with an all-zero solution: `2 max_j |X_j^T y|`.
pub fn lambda_max<T: Real>(x: &Matrix<T>, y: &[T]) -> T {
    // Same column dot products as the solver, so the solution at lambda_max is exactly zero.
    Design::new(x)
        .t_matvec(y)
        .iter()
        .fold(T::zero(), |m, &g| m.max(g.abs()))
        * T::lit(2.0)
}

/// Decreasing, log-equispaced penalties from `lambda_max` down to `ratio * lambda_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid<T> {
    pub values: Vec<T>,
    pub lambda_max: T,
    pub ratio: T,
}

impl<T: Real> LambdaGrid<T> {
    /// `1e-3` when `p > n`, `1e-4` otherwise.
    pub fn default_ratio(n: usize, p: usize) -> T {
        if p > n {
            T::lit(1e-3)
        } else {
            T::lit(1e-4)
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn lambda_grid<T: Real>(
    ds: &RegressionDataset<T>,
    n_lambda: usize,
    ratio: T,
) -> Result<LambdaGrid<T>> {
    if !(ratio > T::zero() && ratio < T::one()) {
        return Err(Error::InvalidRatio(ratio.as_f64()));
    }
    if n_lambda == 0 {
        return Err(Error::InvalidConfig("n_lambda must be at least 1".into()));
    }
    let lmax = lambda_max(ds.x(), ds.y());
    if !(lmax > T::zero()) {
        return Err(Error::DegenerateGrid);
    }
    let values = if n_lambda == 1 {
        vec![lmax]
    } else {
        let log_ratio = ratio.ln();
        let steps = T::from_usize_lossy(n_lambda - 1);
        (0..n_lambda)
            .map(|i| {
                if i == 0 {
                    lmax
                } else {
                    lmax * (log_ratio * T::from_usize_lossy(i) / steps).exp()
                }
            })
            .collect()
    };
    Ok(LambdaGrid {
        values,
        lambda_max: lmax,
        ratio,
    })
}

/// Sweeps between active-set refinements.
const POLISH_EVERY: usize = 10;
const MAX_POLISH_STEPS: usize = 32;
/// Relative pivot size, in units of machine epsilon, below which an active column counts as
/// linearly dependent on the preceding ones.
const DEPENDENCE_TOL: f64 = 1e4;
/// Minimum number of factor updates before a rebuild from scratch.
const REBUILD_AFTER: usize = 64;
/// Sweeps between recomputations of the incrementally updated residual.
const REFRESH_EVERY: usize = 64;

/// State shared by every fit on one (design, response) pair: lazily computed Gram columns
/// `X^T x_j`, the fixed `X^T y`, and a Cholesky factor of the Gram matrix of the variables in
/// `order`, kept up to date as the active set changes.
struct GramCache<T> {
    cols: Vec<Option<Vec<T>>>,
    xty: Vec<T>,
    factor: UpdatableCholesky<T>,
    order: Vec<usize>,
    in_factor: Vec<bool>,
    /// Appends and removals since the factor was last rebuilt from scratch.
    updates: usize,
}

fn gram_column<'a, T: Real>(
    cols: &'a mut [Option<Vec<T>>],
    design: &Design<T>,
    j: usize,
) -> &'a [T] {
    cols[j].get_or_insert_with(|| design.t_matvec(design.col(j)))
}

impl<T: Real> GramCache<T> {
    fn new(design: &Design<T>, y: &[T]) -> Self {
        Self {
            cols: vec![None; design.p()],
            xty: design.t_matvec(y),
            factor: UpdatableCholesky::new(),
            order: Vec::new(),
            in_factor: vec![false; design.p()],
            updates: 0,
        }
    }

    fn remove_at(&mut self, pos: usize) {
        self.factor.remove(pos);
        let j = self.order.remove(pos);
        self.in_factor[j] = false;
        self.updates += 1;
    }

    /// Drops factored variables whose coefficient is zero.
    fn prune(&mut self, beta: &[T]) {
        for pos in (0..self.order.len()).rev() {
            if beta[self.order[pos]] == T::zero() {
                self.remove_at(pos);
            }
        }
    }

    /// Adds variable `j` to the factor, or returns a null direction over `order` then `j`.
    fn append(&mut self, design: &Design<T>, j: usize) -> std::result::Result<(), Vec<T>> {
        let col = gram_column(&mut self.cols, design, j);
        let cross: Vec<T> = self.order.iter().map(|&i| col[i]).collect();
        let diag = col[j];
        self.factor
            .append(&cross, diag, T::lit(DEPENDENCE_TOL) * T::epsilon())?;
        self.order.push(j);
        self.in_factor[j] = true;
        self.updates += 1;
        Ok(())
    }

    /// Refactors from scratch once many updates have accumulated rounding error.
    fn maybe_rebuild(&mut self, design: &Design<T>) {
        if self.updates <= REBUILD_AFTER.max(2 * self.order.len()) {
            return;
        }
        let vars = std::mem::take(&mut self.order);
        for &j in &vars {
            self.in_factor[j] = false;
        }
        self.factor = UpdatableCholesky::new();
        for j in vars {
            // A variable that became dependent is left out; the next polish brings it back.
            let _ = self.append(design, j);
        }
        self.updates = 0;
    }
}

/// Moves `beta` along a direction `d` over the variables `idx` with `X_idx d ~ 0`. The fit is
/// unchanged while the penalty changes linearly, so the move goes in the direction that does
/// not increase the penalty, up to the first coordinate reaching zero, which is set to zero
/// exactly.
fn step_along_null<T: Real>(idx: &[usize], null: &[T], beta: &mut [T]) {
    let slope: T = idx.iter().zip(null).map(|(&j, &d)| sign(beta[j]) * d).sum();
    let dir = if slope > T::zero() { -T::one() } else { T::one() };
    let mut step = T::infinity();
    let mut blocking = idx[idx.len() - 1];
    for (&j, &d) in idx.iter().zip(null) {
        let e = dir * d;
        if e != T::zero() && sign(e) != sign(beta[j]) {
            let t = -beta[j] / e;
            if t < step {
                step = t;
                blocking = j;
            }
        }
    }
    if step.is_finite() {
        for (&j, &d) in idx.iter().zip(null) {
            let moved = beta[j] + step * dir * d;
            beta[j] = if sign(moved) == sign(beta[j]) { moved } else { T::zero() };
        }
    }
    beta[blocking] = T::zero();
}

/// Primal active-set refinement on the current sign pattern.
///
/// With `A` the nonzero set and `s_A` its signs, the minimizer of the objective over that
/// orthant face solves `X_A^T X_A b_A = X_A^T y - (lambda/2) s_A`. If it keeps every sign it
/// replaces `beta`; otherwise `beta` moves toward it up to the first sign crossing, that
/// coordinate leaves `A`, and the step repeats. The objective is a convex quadratic on the face,
/// so each move decreases it. Linearly dependent columns of `X_A` are removed first by moves
/// along null directions. Returns whether `beta` changed.
fn polish_sign_pattern<T: Real>(
    design: &Design<T>,
    cache: &mut GramCache<T>,
    lambda: T,
    beta: &mut [T],
) -> bool {
    let half = lambda / T::lit(2.0);
    let mut changed = false;
    cache.prune(beta);
    cache.maybe_rebuild(design);
    for j in 0..beta.len() {
        while beta[j] != T::zero() && !cache.in_factor[j] {
            if let Err(null) = cache.append(design, j) {
                let mut idx = cache.order.clone();
                idx.push(j);
                step_along_null(&idx, &null, beta);
                cache.prune(beta);
                changed = true;
            }
        }
    }
    for _ in 0..MAX_POLISH_STEPS {
        if cache.order.is_empty() {
            return changed;
        }
        let rhs: Vec<T> = cache
            .order
            .iter()
            .map(|&j| cache.xty[j] - half * sign(beta[j]))
            .collect();
        let sol = cache.factor.solve(&rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            return changed;
        }
        // First crossing along beta + t (sol - beta), t in (0, 1].
        let mut step = T::one();
        let mut blocking = None;
        for (&j, &v) in cache.order.iter().zip(&sol) {
            if sign(v) != sign(beta[j]) {
                let t = beta[j] / (beta[j] - v);
                if t < step {
                    step = t;
                    blocking = Some(j);
                }
            }
        }
        match blocking {
            None => {
                for (&j, &v) in cache.order.iter().zip(&sol) {
                    beta[j] = v;
                }
                return true;
            }
            Some(jb) => {
                for (&j, &v) in cache.order.iter().zip(&sol) {
                    let moved = beta[j] + step * (v - beta[j]);
                    // Guard against rounding pushing a coordinate across zero.
                    beta[j] = if sign(moved) == sign(beta[j]) { moved } else { T::zero() };
                }
                beta[jb] = T::zero();
                cache.prune(beta);
                changed = true;
            }
        }
    }
    changed
}

/// Final state of a converged solve, kept for strong-rule screening along a path.
struct Solved<T> {
    fit: LassoFit<T>,
    /// `X^T r` at the solution.
    grad: Vec<T>,
}

/// Cyclic coordinate descent on a working set, then a full KKT check on a fresh residual;
/// violating coordinates join the working set and the loop repeats.
fn solve<T: Real>(
    design: &Design<T>,
    cache: &mut GramCache<T>,
    y: &[T],
    lambda: T,
    mut beta: Vec<T>,
    candidates: &[usize],
    opts: &LassoOptions<T>,
) -> Result<Solved<T>> {
    let p = design.p();
    let half = lambda / T::lit(2.0);
    let two = T::lit(2.0);
    let inner_tol = opts.tol / T::lit(4.0);

    let mut in_ws = vec![false; p];
    let mut working: Vec<usize> = Vec::new();
    for j in (0..p).filter(|&j| beta[j] != T::zero()).chain(candidates.iter().copied()) {
        if !in_ws[j] {
            in_ws[j] = true;
            working.push(j);
        }
    }
    working.sort_unstable();

    let mut r = design.residual(y, &beta);
    let mut iters = 0usize;
    let mut best_violation = T::infinity();
    loop {
        let mut sweeps_since_polish = 0usize;
        loop {
            if working.is_empty() {
                break;
            }
            iters += 1;
            if iters > opts.max_iters {
                let grad = design.t_matvec(&design.residual(y, &beta));
                let v = max_violation(&grad, &beta, lambda).min(best_violation);
                return Err(Error::MaxItersExceeded {
                    iters: opts.max_iters,
                    violation: v.as_f64(),
                    best_beta: beta.iter().map(|b| b.as_f64()).collect(),
                });
            }
            let mut sweep_violation = T::zero();
            for &j in &working {
                let sq = design.sq_norms[j];
                if sq == T::zero() {
                    continue;
                }
                let xj = design.col(j);
                let g = dot(xj, &r);
                let b = beta[j];
                sweep_violation = sweep_violation.max(coord_violation(two * g, b, lambda));
                let nb = soft_threshold(g + sq * b, half) / sq;
                if nb != b {
                    axpy(b - nb, xj, &mut r);
                    beta[j] = nb;
                }
            }
            if sweep_violation <= inner_tol {
                break;
            }
            sweeps_since_polish += 1;
            if sweeps_since_polish >= POLISH_EVERY {
                sweeps_since_polish = 0;
                if polish_sign_pattern(design, cache, lambda, &mut beta) {
                    r = design.residual(y, &beta);
                    continue;
                }
            }
            if iters % REFRESH_EVERY == 0 {
                r = design.residual(y, &beta);
            }
        }

        iters += 1;
        r = design.residual(y, &beta);
        let grad = design.t_matvec(&r);
        let violation = max_violation(&grad, &beta, lambda);
        best_violation = best_violation.min(violation);
        if violation <= opts.tol {
            let fit = LassoFit {
                objective: objective_of(&r, &beta, lambda),
                beta,
                lambda,
                n_iters: iters,
                kkt_violation: violation,
            };
            return Ok(Solved { fit, grad });
        }
        if iters > opts.max_iters {
            return Err(Error::MaxItersExceeded {
                iters: opts.max_iters,
                violation: violation.as_f64(),
                best_beta: beta.iter().map(|b| b.as_f64()).collect(),
            });
        }
        let mut added = false;
        for j in 0..p {
            if !in_ws[j] && coord_violation(two * grad[j], beta[j], lambda) > T::zero() {
                in_ws[j] = true;
                working.push(j);
                added = true;
            }
        }
        if added {
            working.sort_unstable();
        }
    }
}

fn check_inputs<T: Real>(design: &Design<T>, y: &[T], lambda: T, init: Option<&[T]>) -> Result<()> {
    if y.len() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "response has {} entries, design has {} rows",
            y.len(),
            design.n()
        )));
    }
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    if let Some(b) = init {
        if b.len() != design.p() {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} entries, design has {} columns",
                b.len(),
                design.p()
            )));
        }
    }
    Ok(())
}

/// Lasso fit at a single penalty on a prepared design.
pub fn fit_lasso_design<T: Real>(
    design: &Design<T>,
    y: &[T],
    lambda: T,
    init: Option<&[T]>,
    opts: &LassoOptions<T>,
) -> Result<LassoFit<T>> {
    check_inputs(design, y, lambda, init)?;
    let beta = init.map_or_else(|| vec![T::zero(); design.p()], <[T]>::to_vec);
    // Without a previous solution, screen with the gradient at the start point.
    let r = design.residual(y, &beta);
    let grad = design.t_matvec(&r);
    let two = T::lit(2.0);
    let candidates: Vec<usize> = (0..design.p())
        .filter(|&j| two * grad[j].abs() > lambda)
        .collect();
    let mut cache = GramCache::new(design, y);
    solve(design, &mut cache, y, lambda, beta, &candidates, opts).map(|s| s.fit)
}

/// Lasso fit at a single penalty. The design is expected to be standardized but this is
/// not required (subsamples and resampled rows are not).
pub fn fit_lasso<T: Real>(
    ds: &RegressionDataset<T>,
    lambda: T,
    init: Option<&[T]>,
    opts: &LassoOptions<T>,
) -> Result<LassoFit<T>> {
    fit_lasso_design(&Design::new(ds.x()), ds.y(), lambda, init, opts)
}

/// Warm-started path over decreasing `lambdas`, screening each step with the sequential
/// strong rule (coordinates with `|2 X_j^T r| >= 2 lambda_k - lambda_{k-1}`). Screening only
/// chooses the starting working set; the full KKT check still certifies every fit. `visit`
/// sees each fit together with the Gram cache.
fn run_path<T: Real>(
    design: &Design<T>,
    y: &[T],
    lambdas: &[T],
    opts: &LassoOptions<T>,
    mut visit: impl FnMut(LassoFit<T>, &mut GramCache<T>) -> Result<()>,
) -> Result<()> {
    check_inputs(design, y, T::zero(), None)?;
    let two = T::lit(2.0);
    let mut beta = vec![T::zero(); design.p()];
    let mut cache = GramCache::new(design, y);
    let mut grad = cache.xty.clone();
    let mut prev_lambda = two * grad.iter().fold(T::zero(), |m, g| m.max(g.abs()));
    for &lambda in lambdas {
        if !(lambda >= T::zero()) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        let cut = two * lambda - prev_lambda;
        let candidates: Vec<usize> = (0..design.p())
            .filter(|&j| two * grad[j].abs() >= cut && two * grad[j].abs() > T::zero())
            .collect();
        let solved = solve(design, &mut cache, y, lambda, beta.clone(), &candidates, opts)
            .map_err(|e| e.context(format!("path fit at lambda = {lambda}")))?;
        beta.clone_from(&solved.fit.beta);
        grad = solved.grad;
        prev_lambda = lambda;
        visit(solved.fit, &mut cache)?;
    }
    Ok(())
}

/// Lasso fits along decreasing `lambdas` with warm starts.
pub fn fit_path_design<T: Real>(
    design: &Design<T>,
    y: &[T],
    lambdas: &[T],
    opts: &LassoOptions<T>,
) -> Result<Vec<LassoFit<T>>> {
    let mut out = Vec::with_capacity(lambdas.len());
    run_path(design, y, lambdas, opts, |fit, _| {
        out.push(fit);
        Ok(())
    })?;
    Ok(out)
}

pub fn fit_path<T: Real>(
    ds: &RegressionDataset<T>,
    lambdas: &[T],
    opts: &LassoOptions<T>,
) -> Result<Vec<LassoFit<T>>> {
    fit_path_design(&Design::new(ds.x()), ds.y(), lambdas, opts)
}

/// Cross-validation curve over a penalty grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult<T> {
    pub grid: LambdaGrid<T>,
    /// Mean held-out squared prediction error per grid point.
    pub cv_mean: Vec<T>,
    /// Standard error of the fold errors per grid point.
    pub cv_se: Vec<T>,
    pub lambda_min: T,
    pub index_min: usize,
    /// Largest penalty whose CV error is within one standard error of the minimum.
    pub lambda_1se: T,
    pub index_1se: usize,
    pub fold_assignment: Vec<usize>,
}

/// Largest-lambda index among grid points within `1e-12` of the minimum CV error.
fn argmin_largest_lambda<T: Real>(cv_mean: &[T]) -> usize {
    let min = cv_mean.iter().copied().fold(T::infinity(), T::min);
    let tie = T::lit(1e-12);
    cv_mean
        .iter()
        .position(|&v| v - min <= tie)
        .unwrap_or(0)
}

/// Seeded partition of `0..n` into `k` near-equal blocks.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, Stream::Folds, 0));
    let mut assign = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        assign[i] = pos * k / n;
    }
    assign
}

/// Gram quantities of one support on the training rows, from which a second stage can refit
/// without touching the design again.
#[derive(Debug, Clone)]
pub struct SupportGram<'a, T> {
    pub support: &'a [usize],
    /// `X_S^T X_S`.
    pub gram: Matrix<T>,
    /// `X_S^T y`.
    pub xty: Vec<T>,
    /// Number of training rows.
    pub n: usize,
}

/// Refit applied to each path support during cross-validation; returns coefficients on the
/// support, in support order.
pub type RefitFn<'a, T> = dyn Fn(&SupportGram<'_, T>) -> Vec<T> + Sync + 'a;

/// K-fold cross-validation of the Lasso path.
///
/// Each training fold is fitted along the full grid with warm starts. Penalties are applied
/// to a fold of `m` rows as `lambda * m / n`, which keeps the per-sample penalty (and hence the
/// selected model size) comparable between folds and the full data.
pub fn cross_validate<T: Real>(
    ds: &RegressionDataset<T>,
    grid: &LambdaGrid<T>,
    k: usize,
    seed: u64,
    opts: &LassoOptions<T>,
) -> Result<CvResult<T>> {
    cross_validate_with(ds, grid, k, seed, opts, None)
}

/// Cross-validation in which the held-out error at each grid point is that of `refit` applied
/// to the Lasso support, or of the Lasso itself when `refit` is `None`.
pub fn cross_validate_with<T: Real>(
    ds: &RegressionDataset<T>,
    grid: &LambdaGrid<T>,
    k: usize,
    seed: u64,
    opts: &LassoOptions<T>,
    refit: Option<&RefitFn<'_, T>>,
) -> Result<CvResult<T>> {
    let mut out = cross_validate_multi(ds, grid, k, seed, opts, &[refit])?;
    Ok(out.pop().expect("one target"))
}

/// One cross-validation pass scoring several targets on shared fold paths; the result for
/// each target equals a separate [`cross_validate_with`] call.
pub fn cross_validate_multi<T: Real>(
    ds: &RegressionDataset<T>,
    grid: &LambdaGrid<T>,
    k: usize,
    seed: u64,
    opts: &LassoOptions<T>,
    targets: &[Option<&RefitFn<'_, T>>],
) -> Result<Vec<CvResult<T>>> {
    let n = ds.n();
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::TooFewSamples { needed: k, got: n });
    }
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    let assign = fold_assignment(n, k, seed);
    // fold_errors[fold][target][grid point]
    let fold_errors: Vec<Vec<Vec<T>>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..n).filter(|&i| assign[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assign[i] == fold).collect();
            let design = Design::from_rows(ds.x(), &train);
            let y_train: Vec<T> = train.iter().map(|&i| ds.y()[i]).collect();
            let scale = T::from_usize_lossy(train.len()) / T::from_usize_lossy(n);
            let lambdas: Vec<T> = grid.values.iter().map(|&l| l * scale).collect();
            let mut errors = vec![Vec::with_capacity(lambdas.len()); targets.len()];
            // Consecutive grid points often share a support; refits are then unchanged.
            let mut last_support: Option<Vec<usize>> = None;
            let mut last_coefs: Vec<Vec<T>> = vec![Vec::new(); targets.len()];
            run_path(&design, &y_train, &lambdas, opts, |fit, cache| {
                let support: Vec<usize> =
                    (0..fit.beta.len()).filter(|&j| fit.beta[j] != T::zero()).collect();
                let same = last_support.as_ref() == Some(&support);
                let mut input = None;
                for (t, target) in targets.iter().enumerate() {
                    let coef = match target {
                        None => support.iter().map(|&j| fit.beta[j]).collect(),
                        Some(_) if same => last_coefs[t].clone(),
                        Some(f) => {
                            let input = input.get_or_insert_with(|| {
                                let mut gram = Matrix::zeros(support.len(), support.len());
                                for (v, &jv) in support.iter().enumerate() {
                                    let col = gram_column(&mut cache.cols, &design, jv);
                                    for (u, &ju) in support.iter().enumerate() {
                                        gram[(u, v)] = col[ju];
                                    }
                                }
                                SupportGram {
                                    support: &support,
                                    gram,
                                    xty: support.iter().map(|&j| cache.xty[j]).collect(),
                                    n: train.len(),
                                }
                            });
                            f(input)
                        }
                    };
                    let err: T = test
                        .iter()
                        .map(|&i| {
                            let row = ds.x().row(i);
                            let pred: T =
                                support.iter().zip(&coef).map(|(&j, &c)| row[j] * c).sum();
                            let e = ds.y()[i] - pred;
                            e * e
                        })
                        .sum();
                    errors[t].push(err);
                    last_coefs[t] = coef;
                }
                last_support = Some(support);
                Ok(())
            })
            .map_err(|e| e.context(format!("cross-validation fold {fold}")))?;
            Ok(errors)
        })
        .collect::<Result<Vec<_>>>()?;

    let fold_sizes: Vec<usize> = (0..k).map(|f| assign.iter().filter(|&&a| a == f).count()).collect();
    Ok((0..targets.len())
        .map(|t| {
            let per_fold: Vec<&[T]> = fold_errors.iter().map(|f| f[t].as_slice()).collect();
            summarize_cv(grid, &per_fold, &fold_sizes, n, assign.clone())
        })
        .collect())
}

/// Combines per-fold summed squared errors into the CV curve and its selections.
fn summarize_cv<T: Real>(
    grid: &LambdaGrid<T>,
    fold_errors: &[&[T]],
    fold_sizes: &[usize],
    n: usize,
    assign: Vec<usize>,
) -> CvResult<T> {
    let k = fold_errors.len();
    let nt = T::from_usize_lossy(n);
    let kt = T::from_usize_lossy(k);
    let mut cv_mean = Vec::with_capacity(grid.len());
    let mut cv_se = Vec::with_capacity(grid.len());
    for l in 0..grid.len() {
        let total: T = fold_errors.iter().map(|f| f[l]).sum();
        cv_mean.push(total / nt);
        let fold_mse: Vec<T> = fold_errors
            .iter()
            .zip(fold_sizes)
            .map(|(f, &m)| f[l] / T::from_usize_lossy(m))
            .collect();
        let mean = fold_mse.iter().copied().sum::<T>() / kt;
        let var = fold_mse.iter().map(|&e| (e - mean) * (e - mean)).sum::<T>() / (kt - T::one());
        cv_se.push((var / kt).sqrt());
    }
    let index_min = argmin_largest_lambda(&cv_mean);
    let bound = cv_mean[index_min] + cv_se[index_min];
    let index_1se = cv_mean
        .iter()
        .position(|&v| v <= bound)
        .unwrap_or(index_min);
    CvResult {
        grid: grid.clone(),
        lambda_min: grid.values[index_min],
        index_min,
        lambda_1se: grid.values[index_1se],
        index_1se,
        cv_mean,
        cv_se,
        fold_assignment: assign,
    }
}

/// Cross-validates, then fits the full data along the grid down to the selected penalty.
pub fn fit_lasso_cv<T: Real>(
    ds: &RegressionDataset<T>,
    design: &Design<T>,
    n_lambda: usize,
    ratio: T,
    folds: usize,
    seed: u64,
    opts: &LassoOptions<T>,
) -> Result<(LassoFit<T>, CvResult<T>)> {
    let grid = lambda_grid(ds, n_lambda, ratio)?;
    let cv = cross_validate(ds, &grid, folds, seed, opts)?;
    let mut path = fit_path_design(design, ds.y(), &grid.values[..=cv.index_min], opts)?;
    let fit = path.pop().expect("non-empty path");
    Ok((fit, cv))
}
