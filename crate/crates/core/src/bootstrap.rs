//! Residual and paired bootstrap around a fitted two-stage pipeline, percentile and basic
//! confidence intervals, and the one-dimensional Mallows (Wasserstein-2) distance.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::Design;
use crate::linalg::Matrix;
use crate::model::{RegressionDataset, TwoStageEstimate};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::scalar::Real;
use crate::two_stage::{fit_two_stage_design, LambdaPolicy, PipelineConfig, PipelineFit, Selection};

/// Above this many coordinates replicates are stored as sparse `(index, value)` lists.
pub const DENSE_STORAGE_MAX_P: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMethod {
    /// Resample centered residuals around the fitted mean.
    Residual,
    /// Resample `(x_i, y_i)` rows.
    Paired,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub b: usize,
    pub method: ResampleMethod,
    pub seed: u64,
    /// Re-run cross-validation in every replicate instead of reusing the selected penalty.
    pub recv: bool,
}

impl BootstrapOptions {
    pub fn new(b: usize, method: ResampleMethod, seed: u64) -> Self {
        Self {
            b,
            method,
            seed,
            recv: false,
        }
    }
}

/// Replicate coefficient vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReplicateStore<T> {
    /// `B x p`.
    Dense(Matrix<T>),
    /// Nonzero `(index, value)` pairs per replicate, with the dimension `p`.
    Sparse { p: usize, rows: Vec<Vec<(usize, T)>> },
}

impl<T: Real> ReplicateStore<T> {
    /// Dense up to [`DENSE_STORAGE_MAX_P`] columns, sparse beyond.
    pub fn from_rows(rows: Vec<Vec<T>>, p: usize) -> Self {
        if p <= DENSE_STORAGE_MAX_P {
            let b = rows.len();
            let data: Vec<T> = rows.into_iter().flatten().collect();
            ReplicateStore::Dense(Matrix::from_row_major(b, p, data).expect("consistent shape"))
        } else {
            let rows = rows
                .into_iter()
                .map(|r| {
                    r.into_iter()
                        .enumerate()
                        .filter(|(_, v)| *v != T::zero())
                        .collect()
                })
                .collect();
            ReplicateStore::Sparse { p, rows }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ReplicateStore::Dense(m) => m.nrows(),
            ReplicateStore::Sparse { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn p(&self) -> usize {
        match self {
            ReplicateStore::Dense(m) => m.ncols(),
            ReplicateStore::Sparse { p, .. } => *p,
        }
    }

    /// Replicate `b` as a dense vector.
    pub fn replicate(&self, b: usize) -> Vec<T> {
        match self {
            ReplicateStore::Dense(m) => m.row(b).to_vec(),
            ReplicateStore::Sparse { p, rows } => {
                let mut out = vec![T::zero(); *p];
                for &(j, v) in &rows[b] {
                    out[j] = v;
                }
                out
            }
        }
    }

    /// Values of coordinate `j` across replicates.
    pub fn coordinate(&self, j: usize) -> Vec<T> {
        match self {
            ReplicateStore::Dense(m) => m.column(j),
            ReplicateStore::Sparse { rows, .. } => rows
                .iter()
                .map(|r| r.iter().find(|(i, _)| *i == j).map_or(T::zero(), |&(_, v)| v))
                .collect(),
        }
    }
}

/// A replicate whose pipeline failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEnsemble<T> {
    pub point_estimate: TwoStageEstimate<T>,
    /// Successful replicates in replicate order.
    pub replicates: ReplicateStore<T>,
    pub method: ResampleMethod,
    /// Configuration every replicate was fitted with.
    pub refit_config: PipelineConfig<T>,
    pub failures: Vec<ReplicateFailure>,
    /// Largest KKT violation reported by the replicate Lasso fits.
    pub max_kkt_violation: T,
}

impl<T: Real> BootstrapEnsemble<T> {
    pub fn b(&self) -> usize {
        self.replicates.len()
    }
}

/// `y - X beta` with its mean removed.
pub fn centered_residuals<T: Real>(ds: &RegressionDataset<T>, estimate: &TwoStageEstimate<T>) -> Vec<T> {
    let mut r = ds.residuals(&estimate.beta);
    if r.is_empty() {
        return r;
    }
    let mean = r.iter().copied().sum::<T>() / T::from_usize_lossy(r.len());
    for v in &mut r {
        *v = *v - mean;
    }
    r
}

/// Replicate configuration: the selected penalty is pinned unless `recv` is set, in which
/// case each replicate cross-validates with its own fold seed.
fn replicate_config<T: Real>(
    config: &PipelineConfig<T>,
    point: &PipelineFit<T>,
    opts: &BootstrapOptions,
    b: u64,
) -> PipelineConfig<T> {
    match (&config.selection, point.lasso.as_ref()) {
        (Selection::Lasso { lambda: LambdaPolicy::Cv(cv) }, Some(fit)) => {
            if opts.recv {
                let mut cv = *cv;
                cv.seed = derive_seed(cv.seed, Stream::Replicate, b);
                let mut out = config.clone();
                out.selection = Selection::Lasso {
                    lambda: LambdaPolicy::Cv(cv),
                };
                out
            } else {
                config.with_fixed_lambda(fit.lambda)
            }
        }
        _ => config.clone(),
    }
}

/// Bootstrap ensemble around `point`, the result of fitting `config` to `ds`.
///
/// Residual method: `Y* = X beta~ + e*` with `e*` drawn with replacement from the centered
/// residuals. Paired method: rows drawn with replacement. Every replicate reruns the whole
/// pipeline. The run fails if more than 1% of replicates fail.
pub fn bootstrap_ensemble<T: Real>(
    ds: &RegressionDataset<T>,
    point: &PipelineFit<T>,
    config: &PipelineConfig<T>,
    opts: &BootstrapOptions,
) -> Result<BootstrapEnsemble<T>> {
    if opts.b == 0 {
        return Err(Error::InvalidConfig("bootstrap needs B >= 1".into()));
    }
    let n = ds.n();
    let design = Design::new(ds.x());
    let fitted = ds.predict(&point.estimate.beta);
    let resid = centered_residuals(ds, &point.estimate);
    let warm = point.lasso.as_ref().map(|f| f.beta.as_slice());
    let outcomes: Vec<Result<(Vec<T>, T)>> = (0..opts.b as u64)
        .into_par_iter()
        .map(|b| {
            let cfg = replicate_config(config, point, opts, b);
            let mut rng = stream_rng(opts.seed, Stream::Bootstrap, b);
            let fit = match opts.method {
                ResampleMethod::Residual => {
                    let y: Vec<T> = fitted
                        .iter()
                        .map(|&f| f + resid[rng.random_range(0..n)])
                        .collect();
                    let star = ds.with_response(y)?;
                    fit_two_stage_design(&star, &design, &cfg, warm)?
                }
                ResampleMethod::Paired => {
                    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    let star = ds.subset_rows(&rows);
                    fit_two_stage_design(&star, &Design::new(star.x()), &cfg, warm)?
                }
            };
            let kkt = fit.lasso.as_ref().map_or(T::zero(), |f| f.kkt_violation);
            Ok((fit.estimate.beta, kkt))
        })
        .collect();

    let mut rows = Vec::with_capacity(opts.b);
    let mut failures = Vec::new();
    let mut max_kkt_violation = T::zero();
    for (index, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok((beta, kkt)) => {
                rows.push(beta);
                max_kkt_violation = max_kkt_violation.max(kkt);
            }
            Err(e) => failures.push(ReplicateFailure {
                index,
                message: e.to_string(),
            }),
        }
    }
    if failures.len() * 100 > opts.b {
        return Err(Error::TooManyReplicateFailures {
            failed: failures.len(),
            total: opts.b,
            first: failures[0].message.clone(),
        });
    }
    Ok(BootstrapEnsemble {
        point_estimate: point.estimate.clone(),
        replicates: ReplicateStore::from_rows(rows, ds.p()),
        method: opts.method,
        refit_config: replicate_config(config, point, opts, 0),
        failures,
        max_kkt_violation,
    })
}

/// Linear-interpolation quantile of sorted data at position `1 + (len - 1) q` (type 7).
pub fn quantile_sorted<T: Real>(sorted: &[T], q: T) -> T {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = T::from_usize_lossy(sorted.len() - 1) * q;
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0).min(sorted.len() - 1);
    if i + 1 >= sorted.len() {
        return sorted[i];
    }
    sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i])
}

fn sorted<T: Real>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    /// `[t_{a/2}, t_{1-a/2}]`.
    Percentile,
    /// `[2 b - t_{1-a/2}, 2 b - t_{a/2}]`.
    Basic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub level: T,
    pub kind: IntervalKind,
}

impl<T: Real> IntervalSet<T> {
    pub fn covers(&self, j: usize, value: T) -> bool {
        self.lower[j] <= value && value <= self.upper[j]
    }

    pub fn length(&self, j: usize) -> T {
        self.upper[j] - self.lower[j]
    }
}

/// Per-coordinate bootstrap confidence intervals at `level`.
pub fn confidence_intervals<T: Real>(
    ens: &BootstrapEnsemble<T>,
    level: T,
    kind: IntervalKind,
) -> Result<IntervalSet<T>> {
    if ens.replicates.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {level}")));
    }
    let half_alpha = (T::one() - level) / T::lit(2.0);
    let p = ens.replicates.p();
    let two = T::lit(2.0);
    let mut lower = Vec::with_capacity(p);
    let mut upper = Vec::with_capacity(p);
    for j in 0..p {
        let vals = sorted(ens.replicates.coordinate(j));
        let lo = quantile_sorted(&vals, half_alpha);
        let hi = quantile_sorted(&vals, T::one() - half_alpha);
        match kind {
            IntervalKind::Percentile => {
                lower.push(lo);
                upper.push(hi);
            }
            IntervalKind::Basic => {
                let b = ens.point_estimate.beta[j];
                lower.push(two * b - hi);
                upper.push(two * b - lo);
            }
        }
    }
    Ok(IntervalSet {
        lower,
        upper,
        level,
        kind,
    })
}

/// Wasserstein-2 distance between two empirical distributions on the line: the root of the
/// integral over `u` in (0, 1) of the squared difference of their quantile functions,
/// integrated exactly over the merged breakpoints `i / len`.
pub fn wasserstein2<T: Real>(a: &[T], b: &[T]) -> T {
    assert!(!a.is_empty() && !b.is_empty(), "empirical distributions must be nonempty");
    let a = sorted(a.to_vec());
    let b = sorted(b.to_vec());
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = T::zero();
    let mut u = T::zero();
    let (fa, fb) = (T::from_usize_lossy(na), T::from_usize_lossy(nb));
    while i < na && j < nb {
        // Next breakpoints (i + 1) / na and (j + 1) / nb compared exactly in integers.
        let ea = (i + 1) * nb;
        let eb = (j + 1) * na;
        let next = if ea <= eb {
            T::from_usize_lossy(i + 1) / fa
        } else {
            T::from_usize_lossy(j + 1) / fb
        };
        let d = a[i] - b[j];
        total = total + (next - u) * d * d;
        u = next;
        if ea <= eb {
            i += 1;
        }
        if eb <= ea {
            j += 1;
        }
    }
    total.max(T::zero()).sqrt()
}

/// Mallows distance for coordinate `j` between sampling draws of `sqrt(n) (beta~_j - beta*_j)`
/// and the bootstrap draws `sqrt(n) (beta~*_j - beta~_j)`.
pub fn mallows_check<T: Real>(sampling_draws: &[T], ens: &BootstrapEnsemble<T>, j: usize, n: usize) -> T {
    let root_n = T::from_usize_lossy(n).sqrt();
    let centre = ens.point_estimate.beta[j];
    let boot: Vec<T> = ens
        .replicates
        .coordinate(j)
        .into_iter()
        .map(|v| root_n * (v - centre))
        .collect();
    wasserstein2(sampling_draws, &boot)
}
