//! Second-stage estimators on a selected support and the composed selection + estimation
//! pipeline.
//!
//! The selection stage is either a Lasso fit (fixed penalty or cross-validated) or stability
//! selection. The estimation stage refits the selected columns by modified least squares
//! (OLS through an SVD of `X_S / sqrt(n)` with singular values below `tau` discarded), by Ridge,
//! or by plain OLS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{
    cross_validate_multi, fit_lasso_design, fit_path_design, lambda_grid, CvResult, Design,
    LambdaGrid, LassoOptions, RefitFn, SupportGram, DEFAULT_N_LAMBDA,
};
use crate::linalg::{Cholesky, Matrix, SymEigen, ThinSvd};
use crate::model::{EstimatorKind, LassoFit, RegressionDataset, SupportSet, TwoStageEstimate};
use crate::scalar::Real;
use crate::stability::{stability_select, StabilityConfig};

/// Indices with `|beta_j| > zero_tol`.
pub fn extract_support<T: Real>(fit: &LassoFit<T>, zero_tol: T) -> SupportSet {
    let idx = (0..fit.beta.len())
        .filter(|&j| fit.beta[j].abs() > zero_tol)
        .collect();
    SupportSet::new(idx, fit.beta.len()).expect("indices are in range")
}

/// Thin SVD of `X_S / sqrt(n)`. When `|S| > n` the factors come from the transposed problem,
/// so `U` is `n x n` and `V` is `|S| x n`.
pub fn scaled_svd<T: Real>(ds: &RegressionDataset<T>, support: &SupportSet) -> ThinSvd<T> {
    let scale = T::one() / T::from_usize_lossy(ds.n()).sqrt();
    let xs = ds.x().select_columns(support.indices()).scale(scale);
    if xs.nrows() >= xs.ncols() {
        ThinSvd::new(&xs).expect("rows >= cols")
    } else {
        let t = ThinSvd::new(&xs.transpose()).expect("rows >= cols");
        ThinSvd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        }
    }
}

fn scatter<T: Real>(support: &SupportSet, coef: &[T]) -> Vec<T> {
    let mut beta = vec![T::zero(); support.p()];
    for (&j, &c) in support.indices().iter().zip(coef) {
        beta[j] = c;
    }
    beta
}

fn estimate<T: Real>(
    support: SupportSet,
    coef: &[T],
    kind: EstimatorKind,
    tau: T,
    mu: T,
    kept_rank: usize,
) -> TwoStageEstimate<T> {
    TwoStageEstimate {
        beta: scatter(&support, coef),
        support,
        kind,
        tau,
        mu,
        kept_rank,
        lambda: None,
    }
}

/// Modified least squares: with `X_S / sqrt(n) = U diag(sigma) V^T`,
/// `beta_S = n^{-1/2} V D^+ U^T y` where `D^+` inverts only `sigma_k >= tau`.
pub fn fit_mls<T: Real>(ds: &RegressionDataset<T>, support: &SupportSet, tau: T) -> TwoStageEstimate<T> {
    if support.is_empty() {
        return estimate(support.clone(), &[], EstimatorKind::Mls, tau, T::zero(), 0);
    }
    let svd = scaled_svd(ds, support);
    let d = support.len();
    let inv_sqrt_n = T::one() / T::from_usize_lossy(ds.n()).sqrt();
    let uty = svd.u.t_matvec(ds.y());
    let mut coef = vec![T::zero(); d];
    let mut kept = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if !(s >= tau) || s == T::zero() {
            continue;
        }
        kept += 1;
        let w = uty[k] / s * inv_sqrt_n;
        for (i, c) in coef.iter_mut().enumerate() {
            *c = *c + svd.v[(i, k)] * w;
        }
    }
    estimate(support.clone(), &coef, EstimatorKind::Mls, tau, T::zero(), kept)
}

/// Ridge on the support: `(X_S^T X_S + mu I)^{-1} X_S^T y`.
pub fn fit_ridge_after<T: Real>(
    ds: &RegressionDataset<T>,
    support: &SupportSet,
    mu: T,
) -> Result<TwoStageEstimate<T>> {
    if !(mu >= T::zero()) {
        return Err(Error::InvalidConfig(format!("ridge penalty must be >= 0, got {mu}")));
    }
    if support.is_empty() {
        return Ok(estimate(support.clone(), &[], EstimatorKind::Ridge, T::zero(), mu, 0));
    }
    let xs = ds.x().select_columns(support.indices());
    let coef = ridge_solve(xs.gram(), &xs.t_matvec(ds.y()), mu)?;
    Ok(estimate(support.clone(), &coef, EstimatorKind::Ridge, T::zero(), mu, support.len()))
}

/// OLS on the support via the normal equations.
pub fn fit_ols<T: Real>(ds: &RegressionDataset<T>, support: &SupportSet) -> Result<TwoStageEstimate<T>> {
    if support.is_empty() {
        return Ok(estimate(support.clone(), &[], EstimatorKind::Ols, T::zero(), T::zero(), 0));
    }
    let xs = ds.x().select_columns(support.indices());
    let coef = ridge_solve(xs.gram(), &xs.t_matvec(ds.y()), T::zero())?;
    Ok(estimate(support.clone(), &coef, EstimatorKind::Ols, T::zero(), T::zero(), support.len()))
}

fn ridge_solve<T: Real>(mut gram: Matrix<T>, xty: &[T], mu: T) -> Result<Vec<T>> {
    for i in 0..gram.nrows() {
        gram[(i, i)] = gram[(i, i)] + mu;
    }
    let chol = Cholesky::new(&gram).map_err(|_| {
        Error::SingularSystem(format!(
            "X_S^T X_S + {mu} I is not positive definite on a support of size {}",
            gram.nrows()
        ))
    })?;
    Ok(chol.solve(xty))
}

/// mLS from the Gram matrix of the support: the retained singular values of `X_S / sqrt(n)`
/// are the square roots of the eigenvalues of `X_S^T X_S / n` that are at least `tau^2`.
/// Returns the coefficients and the kept rank.
pub fn mls_from_gram<T: Real>(gram: &Matrix<T>, xty: &[T], n: usize, tau: T) -> (Vec<T>, usize) {
    let d = gram.nrows();
    if d == 0 {
        return (Vec::new(), 0);
    }
    let nt = T::from_usize_lossy(n);
    // X_S^T X_S - n tau^2 I positive definite means every singular value clears tau.
    let mut shifted = gram.clone();
    for i in 0..d {
        shifted[(i, i)] = shifted[(i, i)] - nt * tau * tau;
    }
    if Cholesky::new(&shifted).is_ok() {
        if let Ok(chol) = Cholesky::new(gram) {
            return (chol.solve(xty), d);
        }
    }
    let eig = SymEigen::new(&gram.scale(T::one() / nt)).expect("square matrix");
    let mut coef = vec![T::zero(); d];
    let mut kept = 0;
    for (k, &ev) in eig.values.iter().enumerate() {
        if !(ev >= tau * tau) || ev <= T::zero() {
            continue;
        }
        kept += 1;
        let proj: T = (0..d).map(|i| eig.vectors[(i, k)] * xty[i]).sum::<T>() / nt;
        let w = proj / ev;
        for (i, c) in coef.iter_mut().enumerate() {
            *c = *c + eig.vectors[(i, k)] * w;
        }
    }
    (coef, kept)
}

/// A tuning constant that may depend on the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum Tuning<T> {
    /// `1 / n`.
    InverseN,
    /// `exp(-n^c / 4)`, the faster-decaying Ridge penalty sequence.
    ExpDecay(T),
    Value(T),
}

impl<T: Real> Tuning<T> {
    pub fn resolve(&self, n: usize) -> T {
        let nt = T::from_usize_lossy(n);
        match *self {
            Tuning::InverseN => T::one() / nt,
            Tuning::ExpDecay(c) => (-nt.powf(c) / T::lit(4.0)).exp(),
            Tuning::Value(v) => v,
        }
    }
}

/// Estimation stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SecondStage<T> {
    Mls { tau: Tuning<T> },
    Ridge { mu: Tuning<T> },
    Ols,
    /// Keep the selection-stage coefficients.
    None,
}

impl<T: Real> SecondStage<T> {
    pub fn mls() -> Self {
        SecondStage::Mls { tau: Tuning::InverseN }
    }

    pub fn ridge() -> Self {
        SecondStage::Ridge { mu: Tuning::InverseN }
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            SecondStage::Mls { .. } => EstimatorKind::Mls,
            SecondStage::Ridge { .. } => EstimatorKind::Ridge,
            SecondStage::Ols => EstimatorKind::Ols,
            SecondStage::None => EstimatorKind::Lasso,
        }
    }

    /// Fits the stage on `support`. With `SecondStage::None`, `selection_beta` supplies the
    /// coefficients.
    pub fn fit(
        &self,
        ds: &RegressionDataset<T>,
        support: &SupportSet,
        selection_beta: Option<&[T]>,
    ) -> Result<TwoStageEstimate<T>> {
        let n = ds.n();
        match *self {
            SecondStage::Mls { tau } => Ok(fit_mls(ds, support, tau.resolve(n))),
            SecondStage::Ridge { mu } => fit_ridge_after(ds, support, mu.resolve(n)),
            SecondStage::Ols => fit_ols(ds, support),
            SecondStage::None => {
                let beta = selection_beta.ok_or_else(|| {
                    Error::InvalidConfig("no selection-stage coefficients to keep".into())
                })?;
                let coef: Vec<T> = support.indices().iter().map(|&j| beta[j]).collect();
                Ok(estimate(
                    support.clone(),
                    &coef,
                    EstimatorKind::Lasso,
                    T::zero(),
                    T::zero(),
                    support.len(),
                ))
            }
        }
    }

    /// Coefficients on the support computed from its Gram matrix, for scoring a support during
    /// cross-validation. `n_full` resolves size-dependent tuning as for the full data. A
    /// support whose refit is undefined scores as the empty model. Returns `None` for
    /// `SecondStage::None`, which is scored on the Lasso coefficients themselves.
    pub fn refit_from_gram(&self, input: &SupportGram<'_, T>, n_full: usize) -> Option<Vec<T>> {
        let zeros = || vec![T::zero(); input.support.len()];
        match *self {
            SecondStage::Mls { tau } => {
                Some(mls_from_gram(&input.gram, &input.xty, input.n, tau.resolve(n_full)).0)
            }
            SecondStage::Ridge { mu } => Some(
                ridge_solve(input.gram.clone(), &input.xty, mu.resolve(n_full)).unwrap_or_else(|_| zeros()),
            ),
            SecondStage::Ols => {
                Some(ridge_solve(input.gram.clone(), &input.xty, T::zero()).unwrap_or_else(|_| zeros()))
            }
            SecondStage::None => None,
        }
    }
}

/// Which point of the cross-validation curve is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CvRule {
    /// Minimum CV error (ties toward the larger penalty).
    #[default]
    Min,
    /// Largest penalty within one standard error of the minimum.
    OneSe,
}

/// Cross-validation settings for choosing the Lasso penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig<T> {
    pub folds: usize,
    pub n_lambda: usize,
    /// Smallest grid value relative to `lambda_max`; the size-dependent default when `None`.
    pub ratio: Option<T>,
    pub seed: u64,
    pub rule: CvRule,
}

impl<T: Real> CvConfig<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            folds: 5,
            n_lambda: DEFAULT_N_LAMBDA,
            ratio: None,
            seed,
            rule: CvRule::default(),
        }
    }

    pub fn grid(&self, ds: &RegressionDataset<T>) -> Result<LambdaGrid<T>> {
        let ratio = self
            .ratio
            .unwrap_or_else(|| LambdaGrid::default_ratio(ds.n(), ds.p()));
        lambda_grid(ds, self.n_lambda, ratio)
    }

    /// Grid index selected by the configured rule.
    pub fn pick(&self, cv: &CvResult<T>) -> usize {
        match self.rule {
            CvRule::Min => cv.index_min,
            CvRule::OneSe => cv.index_1se,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum LambdaPolicy<T> {
    Fixed(T),
    /// Cross-validation scored on the prediction error of the full pipeline.
    Cv(CvConfig<T>),
}

/// Selection stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Selection<T> {
    Lasso { lambda: LambdaPolicy<T> },
    Stability(StabilityConfig<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig<T> {
    pub selection: Selection<T>,
    pub second_stage: SecondStage<T>,
    pub lasso: LassoOptions<T>,
    /// Coefficients with magnitude at most this are treated as unselected.
    pub zero_tol: T,
}

impl<T: Real> PipelineConfig<T> {
    /// Lasso selection by cross-validation followed by `second_stage`.
    pub fn lasso_cv(second_stage: SecondStage<T>, seed: u64) -> Self {
        Self {
            selection: Selection::Lasso {
                lambda: LambdaPolicy::Cv(CvConfig::new(seed)),
            },
            second_stage,
            lasso: LassoOptions::default(),
            zero_tol: T::zero(),
        }
    }

    /// The same pipeline with the Lasso penalty pinned to `lambda`.
    pub fn with_fixed_lambda(&self, lambda: T) -> Self {
        let mut out = self.clone();
        if let Selection::Lasso { lambda: policy } = &mut out.selection {
            *policy = LambdaPolicy::Fixed(lambda);
        }
        out
    }
}

/// Output of [`fit_two_stage`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFit<T> {
    pub estimate: TwoStageEstimate<T>,
    /// Selection-stage Lasso fit, when the selection stage was a Lasso.
    pub lasso: Option<LassoFit<T>>,
    pub cv: Option<CvResult<T>>,
}

/// Runs selection and then the estimation stage.
pub fn fit_two_stage<T: Real>(ds: &RegressionDataset<T>, config: &PipelineConfig<T>) -> Result<PipelineFit<T>> {
    fit_two_stage_design(ds, &Design::new(ds.x()), config, None)
}

/// [`fit_two_stage`] on a prepared design for `ds.x()`, optionally warm-starting a
/// fixed-penalty Lasso from `init`.
pub fn fit_two_stage_design<T: Real>(
    ds: &RegressionDataset<T>,
    design: &Design<T>,
    config: &PipelineConfig<T>,
    init: Option<&[T]>,
) -> Result<PipelineFit<T>> {
    match &config.selection {
        Selection::Lasso { lambda } => {
            let fit = match lambda {
                LambdaPolicy::Fixed(l) => fit_lasso_design(design, ds.y(), *l, init, &config.lasso)?,
                LambdaPolicy::Cv(cvc) => {
                    let mut fits =
                        fit_lasso_cv_many(ds, design, &[config.second_stage], cvc, &config.lasso, config.zero_tol)?;
                    return Ok(fits.pop().expect("one stage"));
                }
            };
            let support = extract_support(&fit, config.zero_tol);
            let mut estimate = config
                .second_stage
                .fit(ds, &support, Some(&fit.beta))
                .map_err(|e| e.context("second stage"))?;
            estimate.lambda = Some(fit.lambda);
            Ok(PipelineFit {
                estimate,
                lasso: Some(fit),
                cv: None,
            })
        }
        Selection::Stability(sc) => {
            let support = stability_select(ds, sc, &config.lasso)?;
            let estimate = match config.second_stage {
                SecondStage::None => {
                    return Err(Error::InvalidConfig(
                        "stability selection needs an estimation stage (mls, ridge or ols)".into(),
                    ))
                }
                stage => stage.fit(ds, &support, None).map_err(|e| e.context("second stage"))?,
            };
            Ok(PipelineFit {
                estimate,
                lasso: None,
                cv: None,
            })
        }
    }
}

/// Lasso selection by cross-validation for several estimation stages at once.
///
/// One cross-validation pass scores every stage on shared fold paths (each stage picks its
/// own penalty from its own curve), and one path on the full data serves all of them. The
/// result for each stage equals a separate [`fit_two_stage_design`] call with that stage.
pub fn fit_lasso_cv_many<T: Real>(
    ds: &RegressionDataset<T>,
    design: &Design<T>,
    stages: &[SecondStage<T>],
    cv: &CvConfig<T>,
    lasso: &LassoOptions<T>,
    zero_tol: T,
) -> Result<Vec<PipelineFit<T>>> {
    if stages.is_empty() {
        return Ok(Vec::new());
    }
    let grid = cv.grid(ds)?;
    let n = ds.n();
    let refits: Vec<_> = stages
        .iter()
        .map(|&stage| move |g: &SupportGram<'_, T>| stage.refit_from_gram(g, n).expect("refitting stage"))
        .collect();
    let targets: Vec<Option<&RefitFn<'_, T>>> = stages
        .iter()
        .zip(&refits)
        .map(|(stage, f)| match stage {
            SecondStage::None => None,
            _ => Some(f as &RefitFn<'_, T>),
        })
        .collect();
    let curves = cross_validate_multi(ds, &grid, cv.folds, cv.seed, lasso, &targets)?;
    let picks: Vec<usize> = curves.iter().map(|c| cv.pick(c)).collect();
    let last = *picks.iter().max().expect("nonempty stages");
    let path = fit_path_design(design, ds.y(), &grid.values[..=last], lasso)?;
    stages
        .iter()
        .zip(curves)
        .zip(picks)
        .map(|((stage, curve), k)| {
            let fit = path[k].clone();
            let support = extract_support(&fit, zero_tol);
            let mut estimate = stage
                .fit(ds, &support, Some(&fit.beta))
                .map_err(|e| e.context("second stage"))?;
            estimate.lambda = Some(fit.lambda);
            Ok(PipelineFit {
                estimate,
                lasso: Some(fit),
                cv: Some(curve),
            })
        })
        .collect()
}

/// Selected penalty of a fitted Lasso pipeline, used to pin the penalty for resampling.
pub fn selected_lambda<T: Real>(fit: &PipelineFit<T>) -> Option<T> {
    fit.lasso.as_ref().map(|f| f.lambda)
}
