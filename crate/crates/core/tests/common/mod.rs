#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use twostage::linalg::Matrix;
use twostage::model::{standardize, RegressionDataset, StandardizeOptions};
use twostage::rng::{stream_rng, Stream};

/// Standardized Gaussian design with `y = X beta + noise * eps`.
pub fn gaussian_dataset(n: usize, p: usize, beta: &[f64], noise: f64, seed: u64) -> RegressionDataset<f64> {
    let mut rng = stream_rng(seed, Stream::Design, 0);
    let x = Matrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let raw = RegressionDataset::new(x, vec![0.0; n]).unwrap();
    let (ds, _) = standardize(&raw, StandardizeOptions::default()).unwrap();
    let mut rng = stream_rng(seed, Stream::Noise, 0);
    let y = ds
        .predict(beta)
        .into_iter()
        .map(|m| m + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ds.with_response(y).unwrap()
}

pub fn to_nalgebra(x: &Matrix<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)])
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length");
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "{what}: coordinate {j}: {x} vs {y}");
    }
}

/// Exhaustive sign-pattern oracle for `||y - X b||^2 + lambda ||b||_1`: for every pattern
/// `s` in {-1, 0, 1}^p solve the stationarity equations of the face
/// `X_A^T X_A b_A = X_A^T y - (lambda / 2) s_A`, keep sign-consistent solutions and return the
/// one with the smallest objective.
pub fn sign_pattern_oracle(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Vec<f64> {
    let p = x.ncols();
    let objective = |b: &DVector<f64>| (y - x * b).norm_squared() + lambda * b.lp_norm(1);
    let mut best = DVector::zeros(p);
    let mut best_obj = objective(&best);
    for code in 0..3usize.pow(p as u32) {
        let mut c = code;
        let signs: Vec<i32> = (0..p)
            .map(|_| {
                let s = (c % 3) as i32 - 1;
                c /= 3;
                s
            })
            .collect();
        let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0).collect();
        if active.is_empty() {
            continue;
        }
        let xa = x.select_columns(&active);
        let rhs = xa.transpose() * y
            - DVector::from_iterator(active.len(), active.iter().map(|&j| lambda / 2.0 * signs[j] as f64));
        let Some(ba) = (xa.transpose() * &xa).lu().solve(&rhs) else {
            continue;
        };
        if active.iter().zip(ba.iter()).any(|(&j, &b)| b * signs[j] as f64 <= 0.0) {
            continue;
        }
        let mut b = DVector::zeros(p);
        for (&j, &v) in active.iter().zip(ba.iter()) {
            b[j] = v;
        }
        let obj = objective(&b);
        if obj < best_obj {
            best_obj = obj;
            best = b;
        }
    }
    best.iter().copied().collect()
}
