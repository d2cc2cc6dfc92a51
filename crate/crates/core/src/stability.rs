//! Stability selection with the randomized Lasso.
//!
//! Each draw fits a Lasso whose per-coordinate penalties are inflated by random weights, on a
//! random half-size subsample, along a grid of penalties. A predictor is stable when its
//! selection frequency reaches `pi_thr` at some penalty.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{fit_lasso_design, fit_path_design, lambda_max, Design, LassoOptions};
use crate::linalg::{Matrix, ThinSvd};
use crate::model::{LassoFit, RegressionDataset, SupportSet};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Real;

/// Penalties at which selection frequencies are recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityLambdas<T> {
    /// `n_lambda` log-equispaced values from `lambda_max` of the full data down to
    /// `min_ratio * lambda_max`.
    Relative { n_lambda: usize, min_ratio: T },
    Values(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig<T> {
    pub lambdas: StabilityLambdas<T>,
    pub n_subsamples: usize,
    /// Weakness: a down-weighted coordinate has its penalty divided by `alpha`.
    pub alpha: T,
    /// Probability that a coordinate is down-weighted.
    pub p_w: T,
    pub pi_thr: T,
    /// Draw subsample rows with replacement (otherwise without).
    pub with_replacement: bool,
    pub seed: u64,
}

impl<T: Real> StabilityConfig<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            lambdas: StabilityLambdas::Relative {
                n_lambda: 20,
                min_ratio: T::lit(0.02),
            },
            n_subsamples: 100,
            alpha: T::lit(0.5),
            p_w: T::lit(0.5),
            pi_thr: T::lit(0.6),
            with_replacement: true,
            seed,
        }
    }

    pub fn lambda_values(&self, ds: &RegressionDataset<T>) -> Result<Vec<T>> {
        match &self.lambdas {
            StabilityLambdas::Values(v) => {
                if v.is_empty() || v.iter().any(|&l| !(l > T::zero())) {
                    return Err(Error::InvalidConfig("stability penalties must be positive".into()));
                }
                Ok(v.clone())
            }
            &StabilityLambdas::Relative { n_lambda, min_ratio } => {
                if n_lambda == 0 || !(min_ratio > T::zero() && min_ratio <= T::one()) {
                    return Err(Error::InvalidConfig(format!(
                        "relative stability grid needs n_lambda >= 1 and min_ratio in (0, 1], got {n_lambda} and {min_ratio}"
                    )));
                }
                let top = lambda_max(ds.x(), ds.y());
                if top == T::zero() {
                    return Err(Error::DegenerateGrid);
                }
                let steps = T::from_usize_lossy(n_lambda.saturating_sub(1).max(1));
                Ok((0..n_lambda)
                    .map(|i| top * min_ratio.powf(T::from_usize_lossy(i) / steps))
                    .collect())
            }
        }
    }
}

/// Selection frequencies of each predictor at each penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionProfile<T> {
    pub lambda_values: Vec<T>,
    /// `p x |lambda_values|`.
    pub pi: Matrix<T>,
    pub n_subsamples: usize,
    pub alpha: T,
    pub p_w: T,
}

fn check_weights<T: Real>(alpha: T, p_w: T) -> Result<()> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(p_w > T::zero() && p_w < T::one()) {
        return Err(Error::InvalidConfig(format!("p_w must lie in (0, 1), got {p_w}")));
    }
    Ok(())
}

/// Weights `W_k = alpha` with probability `p_w`, else 1.
pub fn draw_weights<T: Real, R: Rng + ?Sized>(p: usize, alpha: T, p_w: T, rng: &mut R) -> Vec<T> {
    let pw = p_w.as_f64();
    (0..p)
        .map(|_| if rng.random::<f64>() < pw { alpha } else { T::one() })
        .collect()
}

/// Minimizes `||y - X b||^2 + lambda sum_k |b_k| / w_k` by fitting the plain Lasso on the
/// design with column `k` multiplied by `w_k` and mapping the coefficients back. The reported
/// KKT violation and objective are those of the rescaled problem, which has the same optimal
/// value.
pub fn fit_weighted_lasso<T: Real>(
    ds: &RegressionDataset<T>,
    lambda: T,
    weights: &[T],
    opts: &LassoOptions<T>,
) -> Result<LassoFit<T>> {
    if weights.len() != ds.p() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} columns",
            weights.len(),
            ds.p()
        )));
    }
    if weights.iter().any(|&w| !(w > T::zero())) {
        return Err(Error::InvalidConfig("weights must be positive".into()));
    }
    let design = Design::new(ds.x()).scaled(weights);
    let mut fit = fit_lasso_design(&design, ds.y(), lambda, None, opts)?;
    for (b, &w) in fit.beta.iter_mut().zip(weights) {
        *b = *b * w;
    }
    Ok(fit)
}

/// Randomized Lasso with weights drawn from `rng`.
pub fn fit_randomized_lasso<T: Real, R: Rng + ?Sized>(
    ds: &RegressionDataset<T>,
    lambda: T,
    alpha: T,
    p_w: T,
    rng: &mut R,
    opts: &LassoOptions<T>,
) -> Result<LassoFit<T>> {
    check_weights(alpha, p_w)?;
    let weights = draw_weights(ds.p(), alpha, p_w, rng);
    fit_weighted_lasso(ds, lambda, &weights, opts)
}

/// Selection frequencies over `n_subsamples` randomized-Lasso fits on subsamples of size
/// `floor(n / 2)`. Penalties are applied to a subsample of `m` rows as `lambda * m / n`.
#[allow(clippy::too_many_arguments)]
pub fn selection_profile<T: Real>(
    ds: &RegressionDataset<T>,
    lambda_values: &[T],
    n_subsamples: usize,
    alpha: T,
    p_w: T,
    with_replacement: bool,
    seed: u64,
    opts: &LassoOptions<T>,
) -> Result<SelectionProfile<T>> {
    let n = ds.n();
    let p = ds.p();
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    if n_subsamples == 0 {
        return Err(Error::InvalidConfig("n_subsamples must be at least 1".into()));
    }
    if lambda_values.is_empty() {
        return Err(Error::InvalidConfig("no stability penalties".into()));
    }
    check_weights(alpha, p_w)?;
    let m = n / 2;
    let scale = T::from_usize_lossy(m) / T::from_usize_lossy(n);
    let lambdas: Vec<T> = lambda_values.iter().map(|&l| l * scale).collect();
    let draws: Vec<Vec<Vec<usize>>> = (0..n_subsamples as u64)
        .into_par_iter()
        .map(|d| {
            let mut rows_rng = stream_rng(seed, Stream::Subsample, d);
            let rows: Vec<usize> = if with_replacement {
                (0..m).map(|_| rows_rng.random_range(0..n)).collect()
            } else {
                sample(&mut rows_rng, n, m).into_vec()
            };
            let weights = draw_weights(p, alpha, p_w, &mut stream_rng(seed, Stream::Weights, d));
            let design = Design::from_rows(ds.x(), &rows).scaled(&weights);
            let y: Vec<T> = rows.iter().map(|&i| ds.y()[i]).collect();
            let path = fit_path_design(&design, &y, &lambdas, opts)
                .map_err(|e| e.context(format!("stability subsample {d}")))?;
            Ok(path.iter().map(|f| f.support().indices().to_vec()).collect())
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; p * lambdas.len()];
    for draw in &draws {
        for (l, support) in draw.iter().enumerate() {
            for &j in support {
                counts[j * lambdas.len() + l] += 1;
            }
        }
    }
    let total = T::from_usize_lossy(n_subsamples);
    let pi = Matrix::from_fn(p, lambdas.len(), |j, l| {
        T::from_usize_lossy(counts[j * lambdas.len() + l]) / total
    });
    Ok(SelectionProfile {
        lambda_values: lambda_values.to_vec(),
        pi,
        n_subsamples,
        alpha,
        p_w,
    })
}

/// Predictors whose maximum selection frequency over the penalties is at least `pi_thr`.
pub fn stable_set<T: Real>(profile: &SelectionProfile<T>, pi_thr: T) -> SupportSet {
    let p = profile.pi.nrows();
    let idx = (0..p)
        .filter(|&j| profile.pi.row(j).iter().any(|&v| v >= pi_thr))
        .collect();
    SupportSet::new(idx, p).expect("indices are in range")
}

/// Stable set for a configuration.
pub fn stability_select<T: Real>(
    ds: &RegressionDataset<T>,
    config: &StabilityConfig<T>,
    opts: &LassoOptions<T>,
) -> Result<SupportSet> {
    if !(config.pi_thr > T::lit(0.5) && config.pi_thr < T::one()) {
        return Err(Error::InvalidConfig(format!(
            "pi_thr must lie in (0.5, 1), got {}",
            config.pi_thr
        )));
    }
    let lambdas = config.lambda_values(ds)?;
    let profile = selection_profile(
        ds,
        &lambdas,
        config.n_subsamples,
        config.alpha,
        config.p_w,
        config.with_replacement,
        config.seed,
        opts,
    )?;
    Ok(stable_set(&profile, config.pi_thr))
}

/// Smallest and largest singular values of `X_K`.
fn restricted_extremes<T: Real>(x: &Matrix<T>, cols: &[usize]) -> (T, T) {
    let xk = x.select_columns(cols);
    if xk.nrows() >= xk.ncols() {
        let s = ThinSvd::new(&xk).expect("rows >= cols").singular_values;
        (*s.last().expect("non-empty subset"), s[0])
    } else {
        // More columns than rows: X_K has a null vector.
        let s = ThinSvd::new(&xk.transpose()).expect("rows >= cols").singular_values;
        (T::zero(), s[0])
    }
}

fn check_k(k: usize, p: usize) -> Result<()> {
    if k == 0 || k > p {
        return Err(Error::InvalidConfig(format!("subset size must lie in 1..={p}, got {k}")));
    }
    Ok(())
}

/// Randomized search for the sparse eigenvalues `min` and `max` over size-`k` subsets `K` of
/// `||X_K a|| / ||a||`. The first value bounds the minimal sparse eigenvalue from above and
/// the second bounds the maximal one from below.
pub fn sparse_eigenvalue_estimate<T: Real>(
    ds: &RegressionDataset<T>,
    k: usize,
    n_trials: usize,
    seed: u64,
) -> Result<(T, T)> {
    check_k(k, ds.p())?;
    if n_trials == 0 {
        return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
    }
    let extremes: Vec<(T, T)> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut idx = sample(&mut stream_rng(seed, Stream::SubsetSearch, t), ds.p(), k).into_vec();
            idx.sort_unstable();
            restricted_extremes(ds.x(), &idx)
        })
        .collect();
    Ok(fold_extremes(&extremes))
}

/// Exact sparse eigenvalues by enumerating every size-`k` subset; limited to `p <= 20`.
pub fn sparse_eigenvalues_exact<T: Real>(ds: &RegressionDataset<T>, k: usize) -> Result<(T, T)> {
    let p = ds.p();
    check_k(k, p)?;
    if p > 20 {
        return Err(Error::InvalidConfig(format!(
            "exact enumeration is limited to p <= 20, got {p}"
        )));
    }
    let extremes: Vec<(T, T)> = (0u32..1 << p)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| {
            let idx: Vec<usize> = (0..p).filter(|&j| mask & (1 << j) != 0).collect();
            restricted_extremes(ds.x(), &idx)
        })
        .collect();
    Ok(fold_extremes(&extremes))
}

fn fold_extremes<T: Real>(extremes: &[(T, T)]) -> (T, T) {
    extremes.iter().fold((T::infinity(), T::zero()), |(lo, hi), &(a, b)| {
        (lo.min(a), hi.max(b))
    })
}
