//! Checks of design conditions and distributional diagnostics: the irrepresentable
//! condition, the eigenvalue floor of `C11`, Lasso sign consistency and QQ normality scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lasso::Design;
use crate::linalg::{Cholesky, Matrix, SymEigen};
use crate::model::{RegressionDataset, SupportSet};
use crate::scalar::{sign, Real};
use crate::simbench::{replicate_dataset, ExperimentConfig, FixedDesign};
use crate::two_stage::{fit_two_stage_design, PipelineConfig, SecondStage};

/// Irrepresentable-condition margins for the columns outside `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcReport<T> {
    /// Columns outside the support, in increasing order; `margins[k]` belongs to `columns[k]`.
    pub columns: Vec<usize>,
    /// `1 - |(C21 C11^{-1} signs)_k|`.
    pub margins: Vec<T>,
    /// Smallest margin; `+inf` when the support covers every column.
    pub eta_min: T,
    /// Every margin strictly positive.
    pub holds: bool,
}

/// `C11 = (1/n) X_S^T X_S`.
pub fn c11<T: Real>(ds: &RegressionDataset<T>, support: &SupportSet) -> Matrix<T> {
    let n = T::from_usize_lossy(ds.n());
    ds.x().select_columns(support.indices()).gram().scale(T::one() / n)
}

/// Evaluates `1 - |C21 C11^{-1} signs|` for every column outside `support`.
pub fn irrepresentable_check<T: Real>(
    ds: &RegressionDataset<T>,
    support: &SupportSet,
    signs: &[T],
) -> Result<IcReport<T>> {
    if signs.len() != support.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} signs for a support of size {}",
            signs.len(),
            support.len()
        )));
    }
    if support.p() != ds.p() {
        return Err(Error::DimensionMismatch(format!(
            "support over {} columns, design has {}",
            support.p(),
            ds.p()
        )));
    }
    let columns = support.complement();
    let v = if support.is_empty() {
        Vec::new()
    } else {
        let chol = Cholesky::new(&c11(ds, support)).map_err(|_| Error::SingularC11)?;
        chol.solve(signs)
    };
    let xs = ds.x().select_columns(support.indices());
    let u = xs.matvec(&v);
    let n = T::from_usize_lossy(ds.n());
    let design = Design::new(&ds.x().select_columns(&columns));
    let margins: Vec<T> = design
        .t_matvec(&u)
        .into_iter()
        .map(|c| T::one() - (c / n).abs())
        .collect();
    let eta_min = margins.iter().copied().fold(T::infinity(), T::min);
    Ok(IcReport {
        columns,
        holds: margins.iter().all(|&m| m > T::zero()),
        margins,
        eta_min,
    })
}

/// Smallest eigenvalue of `C11`, clamped at zero.
pub fn c11_min_eigenvalue<T: Real>(ds: &RegressionDataset<T>, support: &SupportSet) -> Result<T> {
    if support.is_empty() {
        return Err(Error::InvalidConfig("C11 needs a nonempty support".into()));
    }
    let eig = SymEigen::new(&c11(ds, support))?;
    Ok(eig.min().unwrap_or_else(T::zero).max(T::zero()))
}

/// `max_i sum_{j in S} x_ij^2 / sqrt(n)`, the finite-sample row-leverage statistic.
pub fn leverage_statistic<T: Real>(ds: &RegressionDataset<T>, support: &SupportSet) -> T {
    let root_n = T::from_usize_lossy(ds.n()).sqrt();
    (0..ds.n())
        .map(|i| {
            let row = ds.x().row(i);
            support.indices().iter().map(|&j| row[j] * row[j]).sum::<T>()
        })
        .fold(T::zero(), T::max)
        / root_n
}

/// Fraction of fresh-noise replicates on the fixed design of `config` where the Lasso signs
/// equal `sign(beta*)` in every coordinate. `pipeline` chooses the penalty; its estimation
/// stage is ignored.
pub fn sign_consistency_rate<T: Real>(
    config: &ExperimentConfig<T>,
    pipeline: &PipelineConfig<T>,
    n_reps: usize,
    seed: u64,
) -> Result<T> {
    if n_reps == 0 {
        return Err(Error::InvalidConfig("sign consistency needs at least one replicate".into()));
    }
    let mut config = config.clone();
    config.seed = seed;
    let fixed = FixedDesign::generate(&config)?;
    let truth: Vec<T> = fixed.beta_true.iter().map(|&b| sign(b)).collect();
    let design = Design::new(fixed.train.x());
    let mut pipeline = pipeline.clone();
    pipeline.second_stage = SecondStage::None;
    let hits: Vec<Result<bool>> = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| {
            let ds = replicate_dataset(&fixed, &config, r)?;
            let fit = fit_two_stage_design(&ds, &design, &pipeline, None)
                .map_err(|e| e.context(format!("replicate {r}")))?;
            let beta = &fit.lasso.expect("Lasso selection").beta;
            Ok(beta.iter().zip(&truth).all(|(&b, &t)| sign(b) == t))
        })
        .collect();
    let mut count = 0usize;
    for h in hits {
        if h? {
            count += 1;
        }
    }
    Ok(T::from_usize_lossy(count) / T::from_usize_lossy(n_reps))
}

/// Minimum number of draws accepted by [`qq_normality_score`].
pub const QQ_MIN_DRAWS: usize = 20;

/// Pearson correlation between the sorted draws and the standard normal quantiles at
/// `(i - 0.5) / m`.
pub fn qq_normality_score<T: Real>(draws: &[T]) -> Result<T> {
    let m = draws.len();
    if m < QQ_MIN_DRAWS {
        return Err(Error::TooFewSamples {
            needed: QQ_MIN_DRAWS,
            got: m,
        });
    }
    let mut x: Vec<f64> = draws.iter().map(|v| v.as_f64()).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: 0 });
    }
    x.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    if x[0] == x[m - 1] {
        return Err(Error::DegenerateDraws);
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let q: Vec<f64> = (1..=m)
        .map(|i| normal.inverse_cdf((i as f64 - 0.5) / m as f64))
        .collect();
    Ok(T::lit(pearson(&x, &q)))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let m = a.len() as f64;
    let ma = a.iter().sum::<f64>() / m;
    let mb = b.iter().sum::<f64>() / m;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}
