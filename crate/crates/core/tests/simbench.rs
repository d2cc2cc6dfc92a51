use twostage::bootstrap::IntervalKind;
use twostage::lasso::kkt_max_violation;
use twostage::simbench::{
    beta_from_magnitudes, design_hash, generate_fixed_design, pilot_lambda, replicate_dataset,
    run_coverage_experiment_with, run_estimation_experiment_with, sampling_distribution_draws,
    sampling_distribution_matrix, toeplitz_covariance, true_beta, CoverageMethod, ExperimentConfig,
    FixedDesign, Group, Method, SimOptions,
};
use twostage::two_stage::{PipelineConfig, SecondStage};
use twostage::Error;

#[test]
fn toeplitz_examples() {
    let id = toeplitz_covariance::<f64>(4, 0.0).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(id[(i, j)], if i == j { 1.0 } else { 0.0 });
        }
    }
    let two = toeplitz_covariance(2, 0.5).unwrap();
    assert_eq!((two[(0, 0)], two[(0, 1)], two[(1, 0)], two[(1, 1)]), (1.0, 0.5, 0.5, 1.0));
    let three = toeplitz_covariance(3, 0.5).unwrap();
    assert_eq!(three[(0, 2)], 0.25);
    assert!(matches!(toeplitz_covariance(3, 1.0), Err(Error::InvalidConfig(_))));
}

#[test]
fn coefficient_patterns() {
    let b1 = true_beta::<f64>(1, 500, 10).unwrap();
    assert_eq!(&b1[..5], &[1.5; 5]);
    assert_eq!(&b1[5..10], &[0.75; 5]);
    assert!(b1[10..].iter().all(|&v| v == 0.0));
    assert_eq!(b1.len(), 500);
    let b2 = true_beta::<f64>(2, 500, 10).unwrap();
    assert_eq!(b2[2], -1.5);
    assert_eq!(&b2[..10], &[1.5, 1.5, -1.5, -1.5, 1.5, 0.75, -0.75, 0.75, -0.75, -0.75]);
    assert!(b2[10..].iter().all(|&v| v == 0.0));
    assert!(matches!(true_beta::<f64>(3, 500, 10), Err(Error::InvalidConfig(_))));
    assert!(matches!(true_beta::<f64>(1, 500, 8), Err(Error::InvalidConfig(_))));
    assert_eq!(beta_from_magnitudes(&[2.0, -1.0], 4).unwrap(), vec![2.0, -1.0, 0.0, 0.0]);
    assert!(beta_from_magnitudes(&[1.0; 3], 2).is_err());
}

#[test]
fn example_settings() {
    for id in 1..=8u8 {
        let c = ExperimentConfig::<f64>::example(id, 1).unwrap();
        assert_eq!(c.n, if id % 2 == 1 { 200 } else { 400 });
        assert_eq!(c.rho, if [3, 4, 7, 8].contains(&id) { 0.5 } else { 0.0 });
        assert_eq!(c.beta_case, if id <= 4 { 1 } else { 2 });
        assert_eq!((c.p, c.s, c.sigma, c.n_reps, c.b, c.level, c.test_size), (500, 10, 1.0, 100, 500, 0.9, 500));
        c.validate().unwrap();
    }
    assert!(ExperimentConfig::<f64>::example(0, 1).is_err());
    assert!(ExperimentConfig::<f64>::example(9, 1).is_err());
    let mut bad = ExperimentConfig::<f64>::example(1, 1).unwrap();
    bad.level = 1.0;
    assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
}

fn small(rho: f64, n: usize, p: usize) -> ExperimentConfig<f64> {
    let mut c = ExperimentConfig::<f64>::example(1, 7).unwrap();
    c.rho = rho;
    c.n = n;
    c.p = p;
    c
}

#[test]
fn independent_design_has_small_cross_correlations() {
    let config = small(0.0, 2000, 20);
    let x = generate_fixed_design(&config, 3).unwrap();
    let n = 2000.0;
    let mut worst: f64 = 0.0;
    for a in 0..20 {
        for b in a + 1..20 {
            let c: f64 = (0..2000).map(|i| x[(i, a)] * x[(i, b)]).sum::<f64>() / n;
            worst = worst.max(c.abs());
        }
    }
    assert!(worst < 5.0 / n.sqrt(), "{worst}");
}

#[test]
fn designs_are_seeded_and_standardized() {
    for rho in [0.0, 0.5] {
        let config = small(rho, 60, 30);
        let a = generate_fixed_design(&config, 11).unwrap();
        let b = generate_fixed_design(&config, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_fixed_design(&config, 12).unwrap());
        for j in 0..30 {
            let col = a.column(j);
            let mean = col.iter().sum::<f64>() / 60.0;
            let ms = col.iter().map(|v| v * v).sum::<f64>() / 60.0;
            assert!(mean.abs() < 1e-10 && (ms - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn correlated_design_follows_the_covariance() {
    let config = small(0.5, 4000, 12);
    let x = generate_fixed_design(&config, 5).unwrap();
    for (lag, target) in [(1usize, 0.5), (2, 0.25), (3, 0.125)] {
        let c: f64 = (0..4000).map(|i| x[(i, 0)] * x[(i, lag)]).sum::<f64>() / 4000.0;
        assert!((c - target).abs() < 5.0 / 4000f64.sqrt(), "lag {lag}: {c}");
    }
}

#[test]
fn replicates_share_the_design() {
    let config = small(0.0, 50, 30);
    let fixed = FixedDesign::generate(&config).unwrap();
    let r0 = replicate_dataset(&fixed, &config, 0).unwrap();
    let r1 = replicate_dataset(&fixed, &config, 1).unwrap();
    assert_eq!(design_hash(r0.x()), fixed.design_hash);
    assert_eq!(design_hash(r1.x()), fixed.design_hash);
    assert_ne!(r0.y(), r1.y());
    assert_eq!(r0.y(), replicate_dataset(&fixed, &config, 0).unwrap().y());
    assert_eq!(fixed.design_hash.len(), 64);
    assert_eq!(fixed.test_x.nrows(), config.test_size);
    assert_eq!(fixed.train.beta_true().unwrap(), fixed.beta_true.as_slice());
}

fn desk(n_reps: usize) -> ExperimentConfig<f64> {
    let mut c = small(0.0, 100, 60);
    c.n_reps = n_reps;
    c.b = 40;
    c.test_size = 100;
    c
}

#[test]
fn estimation_report_is_consistent() {
    let config = desk(8);
    let run = run_estimation_experiment_with(&config, &SimOptions::default()).unwrap();
    let report = &run.report;
    assert_eq!(report.estimation.len(), 3);
    for (m, metrics) in Method::ALL.iter().zip(&report.estimation) {
        assert_eq!(metrics.method, *m);
        assert!(metrics.bias_sq >= 0.0 && metrics.mse_mean >= metrics.bias_sq - 1e-12);
        assert!(metrics.pmse_mean > 0.0 && metrics.mse_sd >= 0.0);
    }
    assert_eq!(run.records.len(), 8 * 3);
    assert!(report.max_kkt_violation <= 1e-7);
    let mse = |m: usize| report.estimation[m].mse_mean;
    assert!(mse(1) < mse(0));

    let csv = report.to_long_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,example,metric,group,value"));
    assert_eq!(lines.count(), 3 * 6);
    assert!(csv.contains("lasso+mls,1,mse_mean,all,"));
    let parsed: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(parsed["estimation"][1]["method"], "lasso+mls");
}

#[test]
fn estimation_is_reproducible_across_worker_counts() {
    let config = desk(6);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_estimation_experiment_with(&config, &SimOptions::default()).unwrap().report.to_json())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(4));
}

#[test]
fn noiseless_estimation_recovers_the_truth() {
    let mut config = desk(3);
    config.sigma = 0.0;
    let run = run_estimation_experiment_with(&config, &SimOptions::default()).unwrap();
    let mls = &run.report.estimation[1];
    assert!(mls.mse_mean < 1e-10, "{}", mls.mse_mean);
    assert!(mls.bias_sq < 1e-10);
}

#[test]
fn coverage_report_groups_and_bounds() {
    let config = desk(4);
    let report = run_coverage_experiment_with(&config, &CoverageMethod::DEFAULT, &SimOptions::default()).unwrap();
    assert_eq!(report.coverage.len(), 3 * 2 * 2);
    for c in &report.coverage {
        assert!((0.0..=1.0).contains(&c.coverage_mean));
        assert!(c.length_mean >= 0.0);
    }
    let find = |m: CoverageMethod, k: IntervalKind, g: Group| {
        report
            .coverage
            .iter()
            .find(|c| c.method == m && c.kind == k && c.group == g)
            .unwrap()
    };
    let rbl = find(CoverageMethod::Rbl, IntervalKind::Basic, Group::Nonzero);
    let rblp = find(CoverageMethod::Rbl, IntervalKind::Percentile, Group::Nonzero);
    assert!((rbl.length_mean - rblp.length_mean).abs() < 1e-12);
    assert_eq!(report.bootstrap_failures, 0);
    assert!(report.max_kkt_violation <= 1e-7);
    assert!(report.to_long_csv().contains("rblmls_basic,1,coverage_mean,nonzero,"));
    let again = run_coverage_experiment_with(&config, &CoverageMethod::DEFAULT, &SimOptions::default()).unwrap();
    assert_eq!(report.to_json(), again.to_json());
}

#[test]
fn noiseless_coverage_is_exact_with_zero_length() {
    let mut config = desk(2);
    config.sigma = 0.0;
    let report = run_coverage_experiment_with(&config, &[CoverageMethod::RblMls], &SimOptions::default()).unwrap();
    for c in &report.coverage {
        assert!(c.length_mean < 1e-12, "{c:?}");
    }
    let basic_nonzero = report
        .coverage
        .iter()
        .find(|c| c.kind == IntervalKind::Basic && c.group == Group::Nonzero)
        .unwrap();
    let zero = report.coverage.iter().find(|c| c.group == Group::Zero).unwrap();
    assert_eq!(zero.coverage_mean, 1.0);
    // Point estimates equal the truth only to rounding; a length-zero interval around them
    // covers up to that rounding.
    assert!(basic_nonzero.length_mean < 1e-12);
}

#[test]
fn zero_coefficient_draws_are_mostly_exact_zeros() {
    let config = ExperimentConfig::<f64>::example(1, 1).unwrap();
    let lambda = pilot_lambda(&config, SecondStage::mls(), &SimOptions::default()).unwrap();
    let pipeline = PipelineConfig::lasso_cv(SecondStage::mls(), 1).with_fixed_lambda(lambda);
    let draws = sampling_distribution_draws(&config, &pipeline, 10, 400).unwrap();
    let zeros = draws.iter().filter(|&&d| d == 0.0).count();
    assert!(zeros as f64 >= 0.95 * 400.0, "{zeros}/400");

    let m = sampling_distribution_matrix(&config, &pipeline, &[0, 10], 5).unwrap();
    assert_eq!((m.nrows(), m.ncols()), (5, 2));
    assert_eq!(m.column(1), sampling_distribution_draws(&config, &pipeline, 10, 5).unwrap());
    assert!(matches!(
        sampling_distribution_draws(&config, &pipeline, 500, 5),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn replicate_fits_pass_the_kkt_certificate() {
    let config = desk(2);
    let fixed = FixedDesign::generate(&config).unwrap();
    let ds = replicate_dataset(&fixed, &config, 1).unwrap();
    let fit = twostage::two_stage::fit_two_stage(&ds, &PipelineConfig::lasso_cv(SecondStage::mls(), 1)).unwrap();
    let lasso = fit.lasso.unwrap();
    assert!(kkt_max_violation(&ds, &lasso.beta, lasso.lambda) <= 1e-7);
}
