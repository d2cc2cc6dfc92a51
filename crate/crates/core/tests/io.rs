use twostage::bootstrap::{BootstrapEnsemble, IntervalKind, IntervalSet, ReplicateStore, ResampleMethod};
use twostage::io::{
    fmt_num, read_dataset_csv, write_dataset_csv, write_ensemble_csv, write_intervals_csv, ResponseColumn,
};
use twostage::linalg::Matrix;
use twostage::model::{EstimatorKind, RegressionDataset, SupportSet, TwoStageEstimate};
use twostage::two_stage::{PipelineConfig, SecondStage};
use twostage::Error;

fn read(text: &str, response: ResponseColumn) -> twostage::Result<twostage::io::CsvDataset<f64>> {
    read_dataset_csv(text.as_bytes(), &response)
}

#[test]
fn header_row_is_detected() {
    let ds = read("a,y,b\n1,2,3\n4,5,6\n", ResponseColumn::Name("y".into())).unwrap();
    assert_eq!(ds.predictor_names, vec!["a", "b"]);
    assert_eq!(ds.response_name, "y");
    assert_eq!(ds.dataset.y(), &[2.0, 5.0]);
    assert_eq!(ds.dataset.x().row(1), &[4.0, 6.0]);

    let plain = read("1,2,3\n4,5,6\n", ResponseColumn::Last).unwrap();
    assert_eq!(plain.dataset.n(), 2);
    assert_eq!(plain.dataset.y(), &[3.0, 6.0]);
    assert_eq!(plain.predictor_names, vec!["x0", "x1"]);

    let by_index = read("1,2,3\n4,5,6\n", ResponseColumn::Index(0)).unwrap();
    assert_eq!(by_index.dataset.y(), &[1.0, 4.0]);
}

#[test]
fn response_selection_errors() {
    assert!(matches!(read("1,2\n3,4\n", ResponseColumn::Name("y".into())), Err(Error::InvalidConfig(_))));
    assert!(matches!(read("a,b\n1,2\n", ResponseColumn::Name("y".into())), Err(Error::InvalidConfig(_))));
    assert!(matches!(read("1,2\n3,4\n", ResponseColumn::Index(2)), Err(Error::InvalidConfig(_))));
    assert_eq!(ResponseColumn::parse("3"), ResponseColumn::Index(3));
    assert_eq!(ResponseColumn::parse("price"), ResponseColumn::Name("price".into()));
}

#[test]
fn parse_errors_carry_file_positions() {
    match read("a,b,y\n1,2,3\n4,oops,6\n", ResponseColumn::Last) {
        Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (3, 2)),
        other => panic!("{other:?}"),
    }
    match read("1,2,3\n4,5\n", ResponseColumn::Last) {
        Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
        other => panic!("{other:?}"),
    }
    match read("1,2,inf\n", ResponseColumn::Last) {
        Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (1, 3)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(read("", ResponseColumn::Last), Err(Error::Parse { .. })));
}

#[test]
fn dataset_round_trip_is_exact() {
    let x = Matrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) / 3.0 - j as f64 * 1e-17 + std::f64::consts::PI * j as f64);
    let y = vec![0.1, -2.5e-300, 1e300, 1.0 / 7.0];
    let ds = RegressionDataset::new(x, y).unwrap();
    let mut buf = Vec::new();
    write_dataset_csv(&mut buf, &ds).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("x0,x1,x2,y\n"));
    let back = read(&text, ResponseColumn::Name("y".into())).unwrap();
    assert_eq!(back.dataset.x(), ds.x());
    assert_eq!(back.dataset.y(), ds.y());
}

#[test]
fn number_format_round_trips() {
    for v in [0.1, 1.0 / 3.0, -7.25e-12, f64::MIN_POSITIVE, 123456789.123456789] {
        assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
    }
    assert_eq!(fmt_num(1.5), "1.5000000000000000e0");
}

fn ensemble() -> BootstrapEnsemble<f64> {
    BootstrapEnsemble {
        point_estimate: TwoStageEstimate {
            support: SupportSet::new(vec![0], 2).unwrap(),
            beta: vec![1.0, 0.0],
            kind: EstimatorKind::Mls,
            tau: 0.0,
            mu: 0.0,
            kept_rank: 1,
            lambda: None,
        },
        replicates: ReplicateStore::from_rows(vec![vec![1.25, 0.0], vec![0.75, -0.5]], 2),
        method: ResampleMethod::Residual,
        refit_config: PipelineConfig::lasso_cv(SecondStage::mls(), 0),
        failures: vec![],
        max_kkt_violation: 0.0,
    }
}

#[test]
fn ensemble_export_has_one_row_per_replicate() {
    let mut buf = Vec::new();
    write_ensemble_csv(&mut buf, &ensemble()).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "beta_0,beta_1");
    assert_eq!(lines.len(), 3);
    let vals: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(vals, vec![0.75, -0.5]);
}

#[test]
fn interval_export_with_and_without_truth() {
    let ci = IntervalSet {
        lower: vec![0.5, -1.0],
        upper: vec![1.5, 1.0],
        level: 0.9,
        kind: IntervalKind::Basic,
    };
    let mut buf = Vec::new();
    write_intervals_csv(&mut buf, &ci, Some(&[1.0, 2.0])).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "coordinate,lower,upper,covered_truth");
    assert!(lines[1].starts_with("0,") && lines[1].ends_with(",true"));
    assert!(lines[2].ends_with(",false"));

    let mut buf = Vec::new();
    write_intervals_csv(&mut buf, &ci, None).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("coordinate,lower,upper\n"));
}
