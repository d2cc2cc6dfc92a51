//! The five subcommands. Every command reads its settings from a resolved [`RunConfig`] and
//! writes its artifacts through [`Artifacts`].

use std::fmt::Write as _;

use serde_json::{json, Value};
use twostage::bootstrap::{bootstrap_ensemble, confidence_intervals, BootstrapOptions, ReplicateStore, ResampleMethod};
use twostage::diagnostics::{c11_min_eigenvalue, irrepresentable_check, leverage_statistic};
use twostage::io::{fmt_num, read_dataset_csv_path, write_ensemble_csv, write_intervals_csv, ResponseColumn};
use twostage::model::{standardize, Standardization, StandardizeOptions, SupportSet};
use twostage::scalar::sign;
use twostage::simbench::{
    run_coverage_experiment_with, run_estimation_experiment_with, CoverageMethod, ExperimentConfig, FixedDesign,
    SimOptions,
};
use twostage::stability::sparse_eigenvalue_estimate;
use twostage::two_stage::fit_two_stage;
use twostage::{BootstrapEnsemble, PipelineFit, RegressionDataset};

use crate::config::{Command, RunConfig};
use crate::output::Artifacts;
use crate::Failure;

/// Random subsets tried by the sparse eigenvalue search in `diagnose`.
const SPARSE_EIGEN_TRIALS: usize = 200;

pub fn execute(config: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    match config.command {
        Command::Fit => fit(config, out),
        Command::Bootstrap => bootstrap(config, out),
        Command::Simulate => simulate(config, out),
        Command::Coverage => coverage(config, out),
        Command::Diagnose => diagnose(config, out),
    }
}

/// Standardized data, the transform back to the original predictors, and column names.
struct Input {
    data: RegressionDataset,
    transform: Standardization<f64>,
    names: Vec<String>,
    response: String,
}

/// Reads `--input` and standardizes its predictors, centring the response. Problems with the
/// file are configuration errors.
fn load_input(config: &RunConfig) -> Result<Input, Failure> {
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| Failure::Config("--input: required".into()))?;
    let bad_input = |e: twostage::Error| Failure::Config(format!("--input {}: {e}", path.display()));
    let response = match config.response.as_str() {
        "last" => ResponseColumn::Last,
        other => ResponseColumn::parse(other),
    };
    let csv = read_dataset_csv_path::<f64>(path, &response).map_err(bad_input)?;
    let (data, transform) =
        standardize(&csv.dataset, StandardizeOptions { intercept: true }).map_err(bad_input)?;
    Ok(Input {
        data,
        transform,
        names: csv.predictor_names,
        response: csv.response_name,
    })
}

fn to_json(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON value serializes");
    s.push('\n');
    s
}

fn coefficients_json(config: &RunConfig, input: &Input, fit: &PipelineFit) -> Value {
    let est = &fit.estimate;
    let (original, intercept) = input.transform.to_original(&est.beta);
    let coefficients: Vec<Value> = input
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| json!({"name": name, "standardized": est.beta[j], "original": original[j]}))
        .collect();
    let cv = fit.cv.as_ref().map(|cv| {
        json!({
            "lambda_min": cv.lambda_min,
            "lambda_1se": cv.lambda_1se,
            "n_lambda": cv.grid.values.len(),
            "cv_error_min": cv.cv_mean[cv.index_min],
        })
    });
    json!({
        "estimator": config.estimator.label(),
        "response": input.response,
        "n": input.data.n(),
        "p": input.data.p(),
        "lambda": est.lambda,
        "tau": est.tau,
        "mu": est.mu,
        "kept_rank": est.kept_rank,
        "support": est.support.indices().iter().map(|&j| input.names[j].as_str()).collect::<Vec<_>>(),
        "support_indices": est.support.indices(),
        "intercept": intercept,
        "coefficients": coefficients,
        "cv": cv,
    })
}

fn fit(config: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let input = load_input(config)?;
    let fit = fit_two_stage(&input.data, &config.pipeline())?;
    out.write("coefficients.json", to_json(&coefficients_json(config, &input, &fit)))?;
    Ok(())
}

/// Expresses every coefficient vector of `ens` on the original predictor scale. Each
/// coordinate is divided by a positive constant, so quantiles and intervals map exactly.
fn to_original_scale(ens: BootstrapEnsemble, transform: &Standardization<f64>) -> BootstrapEnsemble {
    let p = ens.replicates.p();
    let rescale = |beta: Vec<f64>| -> Vec<f64> { transform.to_original(&beta).0 };
    let rows = (0..ens.b()).map(|b| rescale(ens.replicates.replicate(b))).collect();
    let mut point = ens.point_estimate.clone();
    point.beta = rescale(point.beta);
    BootstrapEnsemble {
        point_estimate: point,
        replicates: ReplicateStore::from_rows(rows, p),
        ..ens
    }
}

fn bootstrap(config: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let input = load_input(config)?;
    let pipeline = config.pipeline();
    let fit = fit_two_stage(&input.data, &pipeline)?;
    let opts = BootstrapOptions::new(config.b, ResampleMethod::Residual, config.seed);
    let ens = bootstrap_ensemble(&input.data, &fit, &pipeline, &opts)?;
    let failures = ens.failures.len();
    let ens = to_original_scale(ens, &input.transform);
    let ci = confidence_intervals(&ens, config.level, config.ci.into())?;

    out.write("coefficients.json", to_json(&coefficients_json(config, &input, &fit)))?;
    let mut buf = Vec::new();
    write_ensemble_csv(&mut buf, &ens)?;
    out.write("ensemble.csv", buf)?;
    let mut buf = Vec::new();
    write_intervals_csv(&mut buf, &ci, None)?;
    out.write("intervals.csv", buf)?;
    if failures > 0 {
        eprintln!("warning: {failures} of {} bootstrap replicates failed and were dropped", config.b);
    }
    Ok(())
}

fn experiment(config: &RunConfig) -> Result<ExperimentConfig<f64>, Failure> {
    let mut exp = ExperimentConfig::example(config.example, config.seed)?;
    exp.n_reps = config.reps;
    exp.b = config.b;
    exp.level = config.level;
    Ok(exp)
}

fn simulate(config: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let run = run_estimation_experiment_with(&experiment(config)?, &SimOptions::default())?;
    out.write("metrics.json", run.report.to_json() + "\n")?;
    out.write("metrics.csv", run.report.to_long_csv())?;
    let mut csv = String::from("replicate,method,lambda,support_size,sq_error,pmse,kkt_violation\n");
    for r in &run.records {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.replicate,
            r.method.label(),
            fmt_num(r.lambda),
            r.support_size,
            fmt_num(r.sq_error),
            fmt_num(r.pmse),
            fmt_num(r.kkt_violation)
        )
        .expect("write to string");
    }
    out.write("replicates.csv", csv)?;
    Ok(())
}

fn coverage(config: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let report = run_coverage_experiment_with(&experiment(config)?, &CoverageMethod::DEFAULT, &SimOptions::default())?;
    out.write("metrics.json", report.to_json() + "\n")?;
    out.write("metrics.csv", report.to_long_csv())?;
    Ok(())
}

/// With `--input`, diagnoses the support and signs selected by the configured estimator on
/// that data. Otherwise diagnoses the true support of the `--example` design.
fn diagnose(config: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let (source, data, support, signs, names) = match &config.input {
        Some(_) => {
            let input = load_input(config)?;
            let fit = fit_two_stage(&input.data, &config.pipeline())?;
            let support = fit.estimate.support.clone();
            let reference = fit.lasso.as_ref().map_or(&fit.estimate.beta, |l| &l.beta);
            let signs: Vec<f64> = support.indices().iter().map(|&j| sign(reference[j])).collect();
            ("input", input.data, support, signs, input.names)
        }
        None => {
            let fixed = FixedDesign::generate(&experiment(config)?)?;
            let idx: Vec<usize> = (0..fixed.beta_true.len()).filter(|&j| fixed.beta_true[j] != 0.0).collect();
            let signs = idx.iter().map(|&j| sign(fixed.beta_true[j])).collect();
            let support = SupportSet::new(idx, fixed.beta_true.len())?;
            let names = (0..fixed.beta_true.len()).map(|j| format!("x{j}")).collect();
            ("example", fixed.train, support, signs, names)
        }
    };

    let (ic, c11_min) = if support.is_empty() {
        (Value::Null, Value::Null)
    } else {
        let ic = match irrepresentable_check(&data, &support, &signs) {
            Ok(report) => serde_json::to_value(&report).expect("report serializes"),
            Err(twostage::Error::SingularC11) => json!({"error": "C11 is singular"}),
            Err(e) => return Err(e.into()),
        };
        (ic, json!(c11_min_eigenvalue(&data, &support)?))
    };
    let k = support.len().clamp(1, data.p());
    let (phi_min, phi_max) = sparse_eigenvalue_estimate(&data, k, SPARSE_EIGEN_TRIALS, config.seed)?;
    let report = json!({
        "source": source,
        "example": if source == "example" { json!(config.example) } else { Value::Null },
        "n": data.n(),
        "p": data.p(),
        "support": support.indices().iter().map(|&j| names[j].as_str()).collect::<Vec<_>>(),
        "support_indices": support.indices(),
        "signs": signs,
        "irrepresentable": ic,
        "c11_min_eigenvalue": c11_min,
        "leverage": leverage_statistic(&data, &support),
        "sparse_eigenvalues": {
            "k": k,
            "trials": SPARSE_EIGEN_TRIALS,
            "min_upper_bound": phi_min,
            "max_lower_bound": phi_max,
        },
    });
    out.write("diagnostics.json", to_json(&report))?;
    Ok(())
}
