//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//! Every experiment uses base seed 1.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use twostage::bootstrap::{
    bootstrap_ensemble, confidence_intervals, mallows_check, BootstrapEnsemble, BootstrapOptions, IntervalKind,
    ReplicateStore, ResampleMethod,
};
use twostage::diagnostics::{c11_min_eigenvalue, irrepresentable_check, qq_normality_score};
use twostage::lasso::{fit_lasso, kkt_max_violation, lambda_max, Design, LassoOptions};
use twostage::linalg::Matrix;
use twostage::model::{EstimatorKind, RegressionDataset, SupportSet, TwoStageEstimate};
use twostage::rng::{stream_rng, Stream};
use twostage::simbench::{
    pilot_lambda, replicate_dataset, run_coverage_experiment_with, run_estimation_experiment_with,
    sampling_distribution_matrix, CoverageMethod, ExperimentConfig, FixedDesign, Group, Method,
    MetricsReport, SimOptions,
};
use twostage::two_stage::{fit_mls, fit_two_stage_design, PipelineConfig, SecondStage};

use common::{gaussian_dataset, sign_pattern_oracle, to_nalgebra};

const SEED: u64 = 1;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn report(outcomes: &mut Vec<Outcome>, id: &'static str, pass: bool, detail: String, started: Instant) {
    println!(
        "{} criterion {id}: {detail} [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    outcomes.push(Outcome { id, pass, detail });
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

fn estimation(example: u8) -> MetricsReport<f64> {
    let config = ExperimentConfig::<f64>::example(example, SEED).unwrap();
    run_estimation_experiment_with(&config, &SimOptions::default()).unwrap().report
}

fn method_row(report: &MetricsReport<f64>, m: Method) -> &twostage::simbench::EstimationMetrics<f64> {
    report.estimation.iter().find(|e| e.method == m).unwrap()
}

fn criterion_8a() -> (bool, String) {
    let mut rng = stream_rng(SEED, Stream::Design, 800);
    let mut worst: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(1..=6);
        let n = p + rng.random_range(8..=20);
        let x = Matrix::from_fn(n, p, |_, _| rng.random_range(-3.0..3.0));
        let y = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let ds = RegressionDataset::new(x, y).unwrap();
        let lambda = rng.random_range(0.01..1.2) * lambda_max(ds.x(), ds.y());
        let fit = fit_lasso(&ds, lambda, None, &LassoOptions::default()).unwrap();
        let oracle = sign_pattern_oracle(&to_nalgebra(ds.x()), &DVector::from_column_slice(ds.y()), lambda);
        for (a, b) in fit.beta.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
        worst_kkt = worst_kkt.max(kkt_max_violation(&ds, &fit.beta, lambda));
    }
    (
        worst <= 1e-6 && worst_kkt <= 1e-7,
        format!("100 instances, max |lasso - oracle| = {worst:.2e}, max KKT = {worst_kkt:.2e}"),
    )
}

fn criterion_8b() -> (bool, String) {
    let mut rng = stream_rng(SEED, Stream::Design, 801);
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let p = 8;
        let n = rng.random_range(20..50);
        let ds = gaussian_dataset(n, p, &[1.0, -2.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0], 1.0, 10_000 + k);
        let size = rng.random_range(1..=6);
        let mut idx = rand::seq::index::sample(&mut rng, p, size).into_vec();
        idx.sort_unstable();
        let support = SupportSet::new(idx, p).unwrap();
        let tau = rng.random::<f64>() * c11_min_eigenvalue(&ds, &support).unwrap().sqrt();
        let mls = fit_mls(&ds, &support, tau);
        let xs = to_nalgebra(ds.x()).select_columns(support.indices());
        let rhs = xs.transpose() * DVector::from_column_slice(ds.y());
        let ols = (xs.transpose() * &xs).cholesky().unwrap().solve(&rhs);
        for (&j, &b) in support.indices().iter().zip(ols.iter()) {
            worst = worst.max((mls.beta[j] - b).abs());
        }
    }
    (worst <= 1e-8, format!("100 instances with tau^2 <= lambda_min(C11), max |mLS - OLS| = {worst:.2e}"))
}

fn criterion_8c() -> (bool, String) {
    let mut rng = stream_rng(SEED, Stream::Bootstrap, 802);
    let mut exact = true;
    for _ in 0..100 {
        let p = rng.random_range(1..8);
        let b = rng.random_range(1..300);
        let point: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let rows: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..p).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.4).collect())
            .collect();
        let ens = BootstrapEnsemble {
            point_estimate: TwoStageEstimate {
                support: SupportSet::new((0..p).collect(), p).unwrap(),
                beta: point.clone(),
                kind: EstimatorKind::Mls,
                tau: 0.0,
                mu: 0.0,
                kept_rank: p,
                lambda: None,
            },
            replicates: ReplicateStore::from_rows(rows, p),
            method: ResampleMethod::Residual,
            refit_config: PipelineConfig::lasso_cv(SecondStage::mls(), SEED),
            failures: vec![],
            max_kkt_violation: 0.0,
        };
        let level = rng.random_range(0.5..0.99);
        let perc = confidence_intervals(&ens, level, IntervalKind::Percentile).unwrap();
        let basic = confidence_intervals(&ens, level, IntervalKind::Basic).unwrap();
        for j in 0..p {
            exact &= basic.lower[j] == 2.0 * point[j] - perc.upper[j];
            exact &= basic.upper[j] == 2.0 * point[j] - perc.lower[j];
        }
    }
    (exact, "100 random ensembles, basic = reflection of percentile bit for bit".into())
}

fn ic_holds_fraction(example: u8, draws: u64) -> f64 {
    let mut holds = 0;
    for k in 0..draws {
        let config = ExperimentConfig::<f64>::example(example, SEED + k).unwrap();
        let fixed = FixedDesign::generate(&config).unwrap();
        let support = SupportSet::new((0..config.s).collect(), config.p).unwrap();
        let signs: Vec<f64> = fixed.beta_true[..config.s].iter().map(|b| b.signum()).collect();
        if irrepresentable_check(&fixed.train, &support, &signs).unwrap().holds {
            holds += 1;
        }
    }
    holds as f64 / draws as f64
}

fn determinism() -> (bool, String) {
    let mut est = ExperimentConfig::<f64>::example(1, SEED).unwrap();
    est.n_reps = 8;
    let mut cov = est.clone();
    cov.n_reps = 3;
    cov.b = 40;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let a = run_estimation_experiment_with(&est, &SimOptions::default()).unwrap().report.to_json();
            let b = run_coverage_experiment_with(&cov, &CoverageMethod::DEFAULT, &SimOptions::default())
                .unwrap()
                .to_json();
            (a, b)
        })
    };
    let one = run(1);
    let four = run(4);
    let again = run(4);
    (
        one == four && four == again,
        format!(
            "estimation ({} bytes) and coverage ({} bytes) reports identical at 1 and 4 workers and on rerun",
            one.0.len(),
            one.1.len()
        ),
    )
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    (mean, (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt())
}

/// Median over the true-support coordinates of the Mallows distance, averaged over `datasets`
/// independent designs of size `n`: sampling draws at the point fit's penalty against a
/// residual bootstrap of the same size.
fn mallows_median(n: usize, datasets: u64, draws: usize, kkt: &mut f64) -> f64 {
    let mut avg = vec![0.0; 10];
    for r in 0..datasets {
        let mut config = ExperimentConfig::<f64>::example(1, SEED * 1000 + r).unwrap();
        config.n = n;
        let fixed = FixedDesign::generate(&config).unwrap();
        let ds = replicate_dataset(&fixed, &config, 0).unwrap();
        let pipeline = PipelineConfig::lasso_cv(SecondStage::mls(), SEED);
        let point = fit_two_stage_design(&ds, &Design::new(ds.x()), &pipeline, None).unwrap();
        let lasso = point.lasso.as_ref().unwrap();
        *kkt = kkt.max(lasso.kkt_violation);
        let coords: Vec<usize> = (0..10).collect();
        let sampling =
            sampling_distribution_matrix(&config, &pipeline.with_fixed_lambda(lasso.lambda), &coords, draws).unwrap();
        let ens = bootstrap_ensemble(&ds, &point, &pipeline, &BootstrapOptions::new(draws, ResampleMethod::Residual, SEED))
            .unwrap();
        *kkt = kkt.max(ens.max_kkt_violation);
        for (j, a) in avg.iter_mut().enumerate() {
            *a += mallows_check(&sampling.column(j), &ens, j, n) / datasets as f64;
        }
    }
    avg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (avg[4] + avg[5]) / 2.0
}

fn main() -> ExitCode {
    let mut outcomes = Vec::new();
    let mut max_kkt: f64 = 0.0;

    let t = Instant::now();
    let (pass, detail) = criterion_8a();
    report(&mut outcomes, "8a", pass, detail, t);
    let t = Instant::now();
    let (pass, detail) = criterion_8b();
    report(&mut outcomes, "8b", pass, detail, t);
    let t = Instant::now();
    let (pass, detail) = criterion_8c();
    report(&mut outcomes, "8c", pass, detail, t);

    let t = Instant::now();
    let draws = 20;
    let rates: Vec<(u8, f64)> = [1u8, 2, 7, 8].iter().map(|&e| (e, ic_holds_fraction(e, draws))).collect();
    let pass = rates.iter().all(|&(e, h)| if e <= 2 { h >= 0.8 } else { 1.0 - h >= 0.6 });
    let detail = rates
        .iter()
        .map(|(e, h)| format!("example {e} holds {:.0}%", 100.0 * h))
        .collect::<Vec<_>>()
        .join(", ");
    report(&mut outcomes, "5", pass, format!("{draws} designs each: {detail}"), t);

    let t = Instant::now();
    let (pass, detail) = determinism();
    report(&mut outcomes, "9", pass, detail, t);

    let t = Instant::now();
    let config = ExperimentConfig::<f64>::example(1, SEED).unwrap();
    let opts = SimOptions::default();
    let lambda = pilot_lambda(&config, SecondStage::mls(), &opts).unwrap();
    let mls = PipelineConfig::lasso_cv(SecondStage::mls(), SEED).with_fixed_lambda(lambda);
    let m = sampling_distribution_matrix(&config, &mls, &[0, 5], 1000).unwrap();
    let qq0 = qq_normality_score(&m.column(0)).unwrap();
    let qq5 = qq_normality_score(&m.column(1)).unwrap();
    let lasso_lambda = pilot_lambda(&config, SecondStage::None, &opts).unwrap();
    let lasso = PipelineConfig::lasso_cv(SecondStage::None, SEED).with_fixed_lambda(lasso_lambda);
    let d = sampling_distribution_matrix(&config, &lasso, &[0], 1000).unwrap().column(0);
    let (mean, sd) = mean_sd(&d);
    let se = sd / 1000f64.sqrt();
    report(
        &mut outcomes,
        "6",
        qq0 >= 0.995 && qq5 >= 0.995 && mean.abs() > 3.0 * se,
        format!(
            "Lasso+mLS qq(j=1) = {qq0:.4}, qq(j=6) = {qq5:.4}; Lasso j=1 draw mean {mean:.3}, 3 SE = {:.3}",
            3.0 * se
        ),
        t,
    );

    let t = Instant::now();
    let mut reports = Vec::new();
    for example in 1..=6u8 {
        let r = estimation(example);
        max_kkt = max_kkt.max(r.max_kkt_violation);
        reports.push(r);
    }
    let e1 = &reports[0];
    let (l1, m1, r1) = (
        method_row(e1, Method::Lasso),
        method_row(e1, Method::LassoMls),
        method_row(e1, Method::LassoRidge),
    );
    report(
        &mut outcomes,
        "1",
        within(l1.mse_mean, 0.30, 0.55)
            && within(m1.mse_mean, 0.04, 0.15)
            && within(r1.mse_mean, 0.04, 0.15)
            && within(l1.pmse_mean, 1.30, 1.60)
            && within(m1.pmse_mean, 1.02, 1.16),
        format!(
            "MSE Lasso {:.3}, mLS {:.3}, Ridge {:.3}; PMSE Lasso {:.3}, mLS {:.3}",
            l1.mse_mean, m1.mse_mean, r1.mse_mean, l1.pmse_mean, m1.pmse_mean
        ),
        t,
    );
    let m2 = method_row(&reports[1], Method::LassoMls).mse_mean;
    let ratio = m1.mse_mean / m2;
    report(
        &mut outcomes,
        "2",
        within(m2, 0.015, 0.06) && within(ratio, 1.8, 3.5),
        format!("example 2 mLS MSE {m2:.4}, MSE ratio n=200/n=400 {ratio:.2}"),
        t,
    );
    let bias: Vec<(f64, f64)> = reports
        .iter()
        .map(|r| (method_row(r, Method::LassoMls).bias_sq, method_row(r, Method::Lasso).bias_sq))
        .collect();
    report(
        &mut outcomes,
        "3",
        bias.iter().all(|&(m, l)| m <= 0.1 * l),
        format!(
            "bias^2 mLS/Lasso per example: {}",
            bias.iter()
                .enumerate()
                .map(|(k, (m, l))| format!("{}: {m:.4}/{l:.4}", k + 1))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        t,
    );

    let t = Instant::now();
    let mut cov_config = ExperimentConfig::<f64>::example(1, SEED).unwrap();
    cov_config.n_reps = 50;
    cov_config.b = 300;
    let cov = run_coverage_experiment_with(&cov_config, &CoverageMethod::DEFAULT, &opts).unwrap();
    max_kkt = max_kkt.max(cov.max_kkt_violation);
    let find = |m: CoverageMethod, g: Group| {
        cov.coverage
            .iter()
            .find(|c| c.method == m && c.kind == IntervalKind::Basic && c.group == g)
            .unwrap()
    };
    let mls_nz = find(CoverageMethod::RblMls, Group::Nonzero);
    let mls_z = find(CoverageMethod::RblMls, Group::Zero);
    let rbl_nz = find(CoverageMethod::Rbl, Group::Nonzero);
    report(
        &mut outcomes,
        "4",
        within(mls_nz.coverage_mean, 0.80, 0.95)
            && mls_z.coverage_mean >= 0.98
            && within(rbl_nz.coverage_mean, 0.60, 0.85)
            && mls_z.length_mean <= 0.01,
        format!(
            "50 datasets x B=300, 90% basic: RBLmLS nonzero {:.3}, zero {:.3} (length {:.4}); RBL nonzero {:.3}; {} replicate failures",
            mls_nz.coverage_mean, mls_z.coverage_mean, mls_z.length_mean, rbl_nz.coverage_mean, cov.bootstrap_failures
        ),
        t,
    );

    let t = Instant::now();
    let datasets = 20;
    let draws = 1000;
    let medians: Vec<f64> = [100usize, 200, 400]
        .iter()
        .map(|&n| mallows_median(n, datasets, draws, &mut max_kkt))
        .collect();
    report(
        &mut outcomes,
        "7",
        medians[0] > medians[1] && medians[1] > medians[2],
        format!(
            "median Mallows distance over {datasets} datasets, {draws} draws per side: n=100 {:.3}, n=200 {:.3}, n=400 {:.3}",
            medians[0], medians[1], medians[2]
        ),
        t,
    );

    let t = Instant::now();
    report(
        &mut outcomes,
        "8d",
        max_kkt <= 1e-7,
        format!("max KKT violation over criteria 1-4 and 7 fits: {max_kkt:.2e}"),
        t,
    );

    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "{} of {} criteria passed{}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {}", failed.join(", "))
        }
    );
    for o in outcomes.iter().filter(|o| !o.pass) {
        eprintln!("criterion {} failed: {}", o.id, o.detail);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
