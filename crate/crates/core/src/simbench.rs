//! Simulation study: the eight example settings, bias²/MSE/PMSE experiments, bootstrap
//! coverage experiments and sampling-distribution draws.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::{
    bootstrap_ensemble, confidence_intervals, BootstrapOptions, IntervalKind, ResampleMethod,
};
use crate::error::{Error, Result};
use crate::lasso::{kkt_max_violation, Design, LassoOptions};
use crate::linalg::{Cholesky, Matrix};
use crate::model::{standardize, RegressionDataset, StandardizeOptions};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::scalar::Real;
use crate::two_stage::{
    fit_lasso_cv_many, fit_two_stage_design, CvConfig, CvRule, LambdaPolicy, PipelineConfig,
    PipelineFit, SecondStage, Selection,
};

/// Number of nonzero coefficients in the two coefficient patterns.
pub const PATTERN_LEN: usize = 10;

/// One simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig<T> {
    /// Which of the eight example settings this started from, if any.
    pub example_id: Option<u8>,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    /// Toeplitz parameter: `Sigma_ij = rho^|i-j|`.
    pub rho: T,
    /// Coefficient sign pattern, 1 or 2.
    pub beta_case: u8,
    pub sigma: T,
    pub n_reps: usize,
    pub b: usize,
    pub level: T,
    pub test_size: usize,
    pub seed: u64,
}

impl<T: Real> ExperimentConfig<T> {
    /// Example `id` in 1..=8: `n` is 200 for odd and 400 for even ids; ids 3, 4, 7 and 8 use
    /// `rho = 0.5`; ids 5 to 8 use the mixed-sign pattern. Always `p = 500`, `s = 10`,
    /// `sigma = 1`, 100 replications, 500 bootstrap replicates, 90% intervals and a test set
    /// of 500.
    pub fn example(id: u8, seed: u64) -> Result<Self> {
        if !(1..=8).contains(&id) {
            return Err(Error::InvalidConfig(format!("example must be in 1..=8, got {id}")));
        }
        Ok(Self {
            example_id: Some(id),
            n: if id % 2 == 1 { 200 } else { 400 },
            p: 500,
            s: PATTERN_LEN,
            rho: if matches!(id, 3 | 4 | 7 | 8) { T::lit(0.5) } else { T::zero() },
            beta_case: if id <= 4 { 1 } else { 2 },
            sigma: T::one(),
            n_reps: 100,
            b: 500,
            level: T::lit(0.9),
            test_size: 500,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 10 {
            return bad(format!("n must be at least 10, got {}", self.n));
        }
        if self.s > self.p {
            return bad(format!("s = {} exceeds p = {}", self.s, self.p));
        }
        if !(self.rho.abs() < T::one()) {
            return bad(format!("rho must satisfy |rho| < 1, got {}", self.rho));
        }
        if !(self.sigma >= T::zero()) || !self.sigma.is_finite() {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.level > T::zero() && self.level < T::one()) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.n_reps == 0 {
            return bad("n_reps must be at least 1".into());
        }
        if self.test_size == 0 {
            return bad("test_size must be at least 1".into());
        }
        true_beta::<T>(self.beta_case, self.p, self.s).map(|_| ())
    }

    pub fn beta_true(&self) -> Result<Vec<T>> {
        true_beta(self.beta_case, self.p, self.s)
    }
}

/// `Sigma_ij = rho^|i-j|`.
pub fn toeplitz_covariance<T: Real>(p: usize, rho: T) -> Result<Matrix<T>> {
    if !(rho.abs() < T::one()) {
        return Err(Error::InvalidConfig(format!("rho must satisfy |rho| < 1, got {rho}")));
    }
    Ok(Matrix::from_fn(p, p, |i, j| {
        if i == j {
            T::one()
        } else {
            rho.powi(i.abs_diff(j) as i32)
        }
    }))
}

/// Coefficients of pattern `case` (1 or 2) followed by zeros. Pattern 1 is five 1.5s then five
/// 0.75s; pattern 2 flips the signs of entries 3, 4, 7, 9 and 10.
pub fn true_beta<T: Real>(case: u8, p: usize, s: usize) -> Result<Vec<T>> {
    let pattern: [f64; PATTERN_LEN] = match case {
        1 => [1.5, 1.5, 1.5, 1.5, 1.5, 0.75, 0.75, 0.75, 0.75, 0.75],
        2 => [1.5, 1.5, -1.5, -1.5, 1.5, 0.75, -0.75, 0.75, -0.75, -0.75],
        _ => return Err(Error::InvalidConfig(format!("beta case must be 1 or 2, got {case}"))),
    };
    if s != PATTERN_LEN {
        return Err(Error::InvalidConfig(format!(
            "coefficient patterns have s = {PATTERN_LEN}, got s = {s}; use beta_from_magnitudes"
        )));
    }
    let values: Vec<T> = pattern.iter().map(|&v| T::lit(v)).collect();
    beta_from_magnitudes(&values, p)
}

/// `values` followed by `p - values.len()` zeros.
pub fn beta_from_magnitudes<T: Real>(values: &[T], p: usize) -> Result<Vec<T>> {
    if values.len() > p {
        return Err(Error::InvalidConfig(format!(
            "{} nonzero coefficients exceed p = {p}",
            values.len()
        )));
    }
    let mut beta = values.to_vec();
    beta.resize(p, T::zero());
    Ok(beta)
}

/// `rows` independent draws from `N(0, Sigma)` as `Z L^T` with `Sigma = L L^T`.
fn gaussian_rows<T: Real>(rows: usize, factor: Option<&Matrix<T>>, p: usize, seed: u64, stream: Stream) -> Matrix<T> {
    let mut rng = stream_rng(seed, stream, 0);
    let z = Matrix::from_fn(rows, p, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
    match factor {
        None => z,
        Some(l) => Matrix::from_fn(rows, p, |i, j| {
            let zi = z.row(i);
            let lj = l.row(j);
            zi[..=j].iter().zip(&lj[..=j]).map(|(&a, &b)| a * b).sum()
        }),
    }
}

fn covariance_factor<T: Real>(p: usize, rho: T) -> Result<Option<Matrix<T>>> {
    if rho == T::zero() {
        return Ok(None);
    }
    let sigma = toeplitz_covariance(p, rho)?;
    let chol = Cholesky::new(&sigma).map_err(|_| Error::FactorizationFailure)?;
    Ok(Some(chol.factor().clone()))
}

/// The standardized fixed design of `config`, drawn from the design stream of `seed`.
pub fn generate_fixed_design<T: Real>(config: &ExperimentConfig<T>, seed: u64) -> Result<Matrix<T>> {
    let mut cfg = config.clone();
    cfg.seed = seed;
    Ok(FixedDesign::generate(&cfg)?.train.x().clone())
}

/// Everything an experiment keeps fixed across replicates.
#[derive(Debug, Clone)]
pub struct FixedDesign<T> {
    /// Standardized design with the noiseless response `X beta*`.
    pub train: RegressionDataset<T>,
    pub beta_true: Vec<T>,
    /// Test rows standardized with the training transform.
    pub test_x: Matrix<T>,
    /// Test responses, with noise drawn once.
    pub test_y: Vec<T>,
    /// SHA-256 of the design entries (as little-endian `f64`).
    pub design_hash: String,
}

impl<T: Real> FixedDesign<T> {
    pub fn generate(config: &ExperimentConfig<T>) -> Result<Self> {
        config.validate()?;
        let beta = config.beta_true()?;
        let factor = covariance_factor(config.p, config.rho)?;
        let raw = gaussian_rows(config.n, factor.as_ref(), config.p, config.seed, Stream::Design);
        let raw_ds = RegressionDataset::new(raw, vec![T::zero(); config.n])?;
        let (std_ds, transform) = standardize(&raw_ds, StandardizeOptions::default())?;
        let x = std_ds.x().clone();
        let mean = x.matvec(&beta);
        let train = RegressionDataset::new(x, mean)?.with_truth(beta.clone(), Some(config.sigma))?;

        let raw_test = gaussian_rows(config.test_size, factor.as_ref(), config.p, config.seed, Stream::TestSet);
        let test_x = transform.apply(&raw_test)?;
        let mut rng = stream_rng(config.seed, Stream::TestSet, 1);
        let test_y = test_x
            .matvec(&beta)
            .into_iter()
            .map(|m| m + config.sigma * T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let design_hash = design_hash(train.x());
        Ok(Self {
            train,
            beta_true: beta,
            test_x,
            test_y,
            design_hash,
        })
    }

    pub fn design(&self) -> &Matrix<T> {
        self.train.x()
    }
}

/// SHA-256 hex digest of the matrix entries.
pub fn design_hash<T: Real>(x: &Matrix<T>) -> String {
    let mut h = Sha256::new();
    h.update((x.nrows() as u64).to_le_bytes());
    h.update((x.ncols() as u64).to_le_bytes());
    for v in x.as_slice() {
        h.update(v.as_f64().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Replicate `r`: `y = X beta* + sigma * eps` with noise from the replicate's own stream.
pub fn replicate_dataset<T: Real>(
    fixed: &FixedDesign<T>,
    config: &ExperimentConfig<T>,
    r: u64,
) -> Result<RegressionDataset<T>> {
    let mut rng = stream_rng(config.seed, Stream::Noise, r);
    let y = fixed
        .train
        .y()
        .iter()
        .map(|&m| m + config.sigma * T::lit(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    fixed.train.with_response(y)
}

/// Point estimators compared in the estimation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "lasso")]
    Lasso,
    #[serde(rename = "lasso+mls")]
    LassoMls,
    #[serde(rename = "lasso+ridge")]
    LassoRidge,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lasso, Method::LassoMls, Method::LassoRidge];

    pub fn stage<T: Real>(self) -> SecondStage<T> {
        match self {
            Method::Lasso => SecondStage::None,
            Method::LassoMls => SecondStage::mls(),
            Method::LassoRidge => SecondStage::ridge(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::LassoMls => "lasso+mls",
            Method::LassoRidge => "lasso+ridge",
        }
    }
}

/// Bootstrap procedures compared in the coverage experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageMethod {
    /// Residual bootstrap of the Lasso.
    Rbl,
    /// Residual bootstrap of Lasso+mLS.
    RblMls,
    /// Residual bootstrap of Lasso+Ridge.
    RblRidge,
    /// Paired bootstrap of the Lasso.
    Pbl,
}

impl CoverageMethod {
    pub const DEFAULT: [CoverageMethod; 3] = [CoverageMethod::Rbl, CoverageMethod::RblMls, CoverageMethod::Pbl];

    pub fn point_method(self) -> Method {
        match self {
            CoverageMethod::Rbl | CoverageMethod::Pbl => Method::Lasso,
            CoverageMethod::RblMls => Method::LassoMls,
            CoverageMethod::RblRidge => Method::LassoRidge,
        }
    }

    pub fn resample(self) -> ResampleMethod {
        match self {
            CoverageMethod::Pbl => ResampleMethod::Paired,
            _ => ResampleMethod::Residual,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CoverageMethod::Rbl => "rbl",
            CoverageMethod::RblMls => "rblmls",
            CoverageMethod::RblRidge => "rblridge",
            CoverageMethod::Pbl => "pbl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    /// Coordinates `j < s`.
    Nonzero,
    /// Coordinates `j >= s`.
    Zero,
}

impl Group {
    fn label(self) -> &'static str {
        match self {
            Group::Nonzero => "nonzero",
            Group::Zero => "zero",
        }
    }
}

/// Tuning shared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions<T> {
    pub folds: usize,
    pub cv_rule: CvRule,
    pub lasso: LassoOptions<T>,
}

impl<T: Real> Default for SimOptions<T> {
    fn default() -> Self {
        Self {
            folds: 5,
            cv_rule: CvRule::default(),
            lasso: LassoOptions::default(),
        }
    }
}

impl<T: Real> SimOptions<T> {
    fn cv(&self, seed: u64) -> CvConfig<T> {
        let mut cv = CvConfig::new(seed);
        cv.folds = self.folds;
        cv.rule = self.cv_rule;
        cv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationMetrics<T> {
    pub method: Method,
    /// `||mean(beta^) - beta*||^2`.
    pub bias_sq: T,
    pub mse_mean: T,
    pub mse_sd: T,
    pub pmse_mean: T,
    pub pmse_sd: T,
    pub support_size_mean: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMetrics<T> {
    pub method: CoverageMethod,
    pub kind: IntervalKind,
    pub group: Group,
    pub coverage_mean: T,
    pub length_mean: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    pub config: ExperimentConfig<T>,
    pub design_hash: String,
    pub estimation: Vec<EstimationMetrics<T>>,
    pub coverage: Vec<CoverageMetrics<T>>,
    /// Largest KKT violation over every Lasso fit of the run.
    pub max_kkt_violation: T,
    pub bootstrap_failures: usize,
}

impl<T: Real> MetricsReport<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long format: `method,example,metric,group,value`.
    pub fn to_long_csv(&self) -> String {
        let example = self
            .config
            .example_id
            .map_or_else(|| "custom".to_string(), |id| id.to_string());
        let mut out = String::from("method,example,metric,group,value\n");
        let mut row = |method: &str, metric: &str, group: &str, value: T| {
            writeln!(out, "{method},{example},{metric},{group},{:.16e}", value.as_f64()).expect("write to string");
        };
        for m in &self.estimation {
            let l = m.method.label();
            row(l, "bias_sq", "all", m.bias_sq);
            row(l, "mse_mean", "all", m.mse_mean);
            row(l, "mse_sd", "all", m.mse_sd);
            row(l, "pmse_mean", "all", m.pmse_mean);
            row(l, "pmse_sd", "all", m.pmse_sd);
            row(l, "support_size_mean", "all", m.support_size_mean);
        }
        for c in &self.coverage {
            let l = format!(
                "{}_{}",
                c.method.label(),
                match c.kind {
                    IntervalKind::Basic => "basic",
                    IntervalKind::Percentile => "percentile",
                }
            );
            row(&l, "coverage_mean", c.group.label(), c.coverage_mean);
            row(&l, "length_mean", c.group.label(), c.length_mean);
        }
        out
    }
}

/// One method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord<T> {
    pub replicate: usize,
    pub method: Method,
    pub lambda: T,
    pub support_size: usize,
    pub sq_error: T,
    pub pmse: T,
    pub kkt_violation: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRun<T> {
    pub report: MetricsReport<T>,
    /// Replicate-major, methods in [`Method::ALL`] order.
    pub records: Vec<ReplicateRecord<T>>,
    /// `mean_beta[m]` is the Monte Carlo mean of method `m`'s estimates.
    pub mean_beta: Vec<Vec<T>>,
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn pmse<T: Real>(fixed: &FixedDesign<T>, beta: &[T]) -> T {
    let pred = crate::model::predict(&fixed.test_x, beta);
    sq_dist(&pred, &fixed.test_y) / T::from_usize_lossy(fixed.test_y.len())
}

fn mean_sd<T: Real>(v: &[T]) -> (T, T) {
    let m = T::from_usize_lossy(v.len());
    let mean = v.iter().copied().sum::<T>() / m;
    if v.len() < 2 {
        return (mean, T::zero());
    }
    let ss: T = v.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (m - T::one())).sqrt())
}

/// Lasso, Lasso+mLS and Lasso+Ridge with per-replicate cross-validation on fresh noise.
pub fn run_estimation_experiment<T: Real>(config: &ExperimentConfig<T>) -> Result<MetricsReport<T>> {
    Ok(run_estimation_experiment_with(config, &SimOptions::default())?.report)
}

pub fn run_estimation_experiment_with<T: Real>(
    config: &ExperimentConfig<T>,
    opts: &SimOptions<T>,
) -> Result<EstimationRun<T>> {
    let fixed = FixedDesign::generate(config)?;
    let design = Design::new(fixed.design());
    let stages: Vec<SecondStage<T>> = Method::ALL.iter().map(|m| m.stage()).collect();
    let per_rep: Vec<Result<Vec<(Vec<T>, ReplicateRecord<T>)>>> = (0..config.n_reps)
        .into_par_iter()
        .map(|r| {
            let ds = replicate_dataset(&fixed, config, r as u64)?;
            let cv = opts.cv(derive_seed(config.seed, Stream::Folds, r as u64));
            let fits = fit_lasso_cv_many(&ds, &design, &stages, &cv, &opts.lasso, T::zero())
                .map_err(|e| e.context(format!("replicate {r}")))?;
            Ok(Method::ALL
                .iter()
                .zip(fits)
                .map(|(&method, fit)| {
                    let lasso = fit.lasso.as_ref().expect("Lasso selection");
                    let beta = fit.estimate.beta.clone();
                    let record = ReplicateRecord {
                        replicate: r,
                        method,
                        lambda: lasso.lambda,
                        support_size: fit.estimate.support.len(),
                        sq_error: sq_dist(&beta, &fixed.beta_true),
                        pmse: pmse(&fixed, &beta),
                        kkt_violation: kkt_max_violation(&ds, &lasso.beta, lasso.lambda),
                    };
                    (beta, record)
                })
                .collect())
        })
        .collect();

    let p = config.p;
    let mut sums = vec![vec![T::zero(); p]; Method::ALL.len()];
    let mut records = Vec::with_capacity(config.n_reps * Method::ALL.len());
    for rep in per_rep {
        for (m, (beta, record)) in rep?.into_iter().enumerate() {
            for (s, b) in sums[m].iter_mut().zip(&beta) {
                *s = *s + *b;
            }
            records.push(record);
        }
    }
    let reps = T::from_usize_lossy(config.n_reps);
    let mean_beta: Vec<Vec<T>> = sums
        .into_iter()
        .map(|s| s.into_iter().map(|v| v / reps).collect())
        .collect();
    let estimation = Method::ALL
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let mine: Vec<&ReplicateRecord<T>> = records.iter().filter(|r| r.method == method).collect();
            let mse: Vec<T> = mine.iter().map(|r| r.sq_error).collect();
            let pm: Vec<T> = mine.iter().map(|r| r.pmse).collect();
            let sizes: Vec<T> = mine.iter().map(|r| T::from_usize_lossy(r.support_size)).collect();
            let (mse_mean, mse_sd) = mean_sd(&mse);
            let (pmse_mean, pmse_sd) = mean_sd(&pm);
            EstimationMetrics {
                method,
                bias_sq: sq_dist(&mean_beta[m], &fixed.beta_true),
                mse_mean,
                mse_sd,
                pmse_mean,
                pmse_sd,
                support_size_mean: mean_sd(&sizes).0,
            }
        })
        .collect();
    let max_kkt_violation = records.iter().map(|r| r.kkt_violation).fold(T::zero(), T::max);
    Ok(EstimationRun {
        report: MetricsReport {
            config: config.clone(),
            design_hash: fixed.design_hash.clone(),
            estimation,
            coverage: Vec::new(),
            max_kkt_violation,
            bootstrap_failures: 0,
        },
        records,
        mean_beta,
    })
}

/// Residual-bootstrap coverage of RBL, RBLmLS and the paired-bootstrap Lasso baseline.
pub fn run_coverage_experiment<T: Real>(config: &ExperimentConfig<T>) -> Result<MetricsReport<T>> {
    run_coverage_experiment_with(config, &CoverageMethod::DEFAULT, &SimOptions::default())
}

const KINDS: [IntervalKind; 2] = [IntervalKind::Basic, IntervalKind::Percentile];

/// Coverage and length sums of one dataset, indexed `[method][kind][group]`.
type CoverageTally<T> = Vec<[[(T, T); 2]; 2]>;

pub fn run_coverage_experiment_with<T: Real>(
    config: &ExperimentConfig<T>,
    methods: &[CoverageMethod],
    opts: &SimOptions<T>,
) -> Result<MetricsReport<T>> {
    if config.b == 0 {
        return Err(Error::InvalidConfig("coverage needs B >= 1".into()));
    }
    let fixed = FixedDesign::generate(config)?;
    let design = Design::new(fixed.design());
    let mut point_methods: Vec<Method> = Vec::new();
    for m in methods {
        if !point_methods.contains(&m.point_method()) {
            point_methods.push(m.point_method());
        }
    }
    let stages: Vec<SecondStage<T>> = point_methods.iter().map(|m| m.stage()).collect();
    let s = config.s;

    let per_rep: Vec<Result<(CoverageTally<T>, T, usize)>> = (0..config.n_reps)
        .into_par_iter()
        .map(|r| {
            let ds = replicate_dataset(&fixed, config, r as u64)?;
            let cv_seed = derive_seed(config.seed, Stream::Folds, r as u64);
            let cv = opts.cv(cv_seed);
            let fits = fit_lasso_cv_many(&ds, &design, &stages, &cv, &opts.lasso, T::zero())
                .map_err(|e| e.context(format!("replicate {r}")))?;
            let mut tally: CoverageTally<T> = Vec::with_capacity(methods.len());
            let mut kkt = T::zero();
            let mut failures = 0;
            for (mi, &method) in methods.iter().enumerate() {
                let pos = point_methods
                    .iter()
                    .position(|&m| m == method.point_method())
                    .expect("point method fitted");
                let point: &PipelineFit<T> = &fits[pos];
                let lasso = point.lasso.as_ref().expect("Lasso selection");
                kkt = kkt.max(kkt_max_violation(&ds, &lasso.beta, lasso.lambda));
                let pipeline = PipelineConfig {
                    selection: Selection::Lasso {
                        lambda: LambdaPolicy::Cv(cv),
                    },
                    second_stage: stages[pos],
                    lasso: opts.lasso,
                    zero_tol: T::zero(),
                };
                let boot_seed = derive_seed(derive_seed(config.seed, Stream::Replicate, r as u64), Stream::Bootstrap, mi as u64);
                let bopts = BootstrapOptions::new(config.b, method.resample(), boot_seed);
                let ens = bootstrap_ensemble(&ds, point, &pipeline, &bopts)
                    .map_err(|e| e.context(format!("replicate {r}, {}", method.label())))?;
                kkt = kkt.max(ens.max_kkt_violation);
                failures += ens.failures.len();
                let mut cell = [[(T::zero(), T::zero()); 2]; 2];
                for (ki, &kind) in KINDS.iter().enumerate() {
                    let ci = confidence_intervals(&ens, config.level, kind)?;
                    for (j, &truth) in fixed.beta_true.iter().enumerate() {
                        let g = usize::from(j >= s);
                        let covered = if ci.covers(j, truth) { T::one() } else { T::zero() };
                        cell[ki][g].0 = cell[ki][g].0 + covered;
                        cell[ki][g].1 = cell[ki][g].1 + ci.length(j);
                    }
                }
                tally.push(cell);
            }
            Ok((tally, kkt, failures))
        })
        .collect();

    let mut totals = vec![[[(T::zero(), T::zero()); 2]; 2]; methods.len()];
    let mut max_kkt = T::zero();
    let mut failures = 0;
    for rep in per_rep {
        let (tally, kkt, f) = rep?;
        max_kkt = max_kkt.max(kkt);
        failures += f;
        for (tot, cell) in totals.iter_mut().zip(&tally) {
            for ki in 0..2 {
                for g in 0..2 {
                    tot[ki][g].0 = tot[ki][g].0 + cell[ki][g].0;
                    tot[ki][g].1 = tot[ki][g].1 + cell[ki][g].1;
                }
            }
        }
    }
    let reps = config.n_reps;
    let group_sizes = [s, config.p - s];
    let mut coverage = Vec::new();
    for (tot, &method) in totals.iter().zip(methods) {
        for (ki, &kind) in KINDS.iter().enumerate() {
            for (g, group) in [Group::Nonzero, Group::Zero].into_iter().enumerate() {
                if group_sizes[g] == 0 {
                    continue;
                }
                let count = T::from_usize_lossy(reps * group_sizes[g]);
                coverage.push(CoverageMetrics {
                    method,
                    kind,
                    group,
                    coverage_mean: tot[ki][g].0 / count,
                    length_mean: tot[ki][g].1 / count,
                });
            }
        }
    }
    Ok(MetricsReport {
        config: config.clone(),
        design_hash: fixed.design_hash,
        estimation: Vec::new(),
        coverage,
        max_kkt_violation: max_kkt,
        bootstrap_failures: failures,
    })
}

/// Penalty chosen by cross-validation of `stage` on replicate 0 of `config`.
pub fn pilot_lambda<T: Real>(config: &ExperimentConfig<T>, stage: SecondStage<T>, opts: &SimOptions<T>) -> Result<T> {
    let fixed = FixedDesign::generate(config)?;
    let ds = replicate_dataset(&fixed, config, 0)?;
    let cv = opts.cv(derive_seed(config.seed, Stream::Folds, 0));
    let fits = fit_lasso_cv_many(&ds, &Design::new(ds.x()), &[stage], &cv, &opts.lasso, T::zero())?;
    Ok(fits[0].lasso.as_ref().expect("Lasso selection").lambda)
}

/// `n_draws x coords.len()` matrix of `sqrt(n) (beta^_j - beta*_j)` over fresh-noise replicates
/// `0..n_draws` on the fixed design of `config`, each fitted with `pipeline`.
pub fn sampling_distribution_matrix<T: Real>(
    config: &ExperimentConfig<T>,
    pipeline: &PipelineConfig<T>,
    coords: &[usize],
    n_draws: usize,
) -> Result<Matrix<T>> {
    if let Some(&j) = coords.iter().find(|&&j| j >= config.p) {
        return Err(Error::InvalidConfig(format!("coordinate {j} out of range for p = {}", config.p)));
    }
    let fixed = FixedDesign::generate(config)?;
    let design = Design::new(fixed.design());
    let root_n = T::from_usize_lossy(config.n).sqrt();
    let rows: Vec<Result<Vec<T>>> = (0..n_draws as u64)
        .into_par_iter()
        .map(|r| {
            let ds = replicate_dataset(&fixed, config, r)?;
            let fit = fit_two_stage_design(&ds, &design, pipeline, None)
                .map_err(|e| e.context(format!("draw {r}")))?;
            Ok(coords
                .iter()
                .map(|&j| root_n * (fit.estimate.beta[j] - fixed.beta_true[j]))
                .collect())
        })
        .collect();
    let rows: Vec<Vec<T>> = rows.into_iter().collect::<Result<_>>()?;
    Ok(Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, coords.len())))
}

/// Draws of `sqrt(n) (beta^_j - beta*_j)` for one coordinate.
pub fn sampling_distribution_draws<T: Real>(
    config: &ExperimentConfig<T>,
    pipeline: &PipelineConfig<T>,
    j: usize,
    n_draws: usize,
) -> Result<Vec<T>> {
    Ok(sampling_distribution_matrix(config, pipeline, &[j], n_draws)?.column(0))
}
