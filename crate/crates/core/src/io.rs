//! CSV ingestion of regression data and CSV export of bootstrap ensembles and intervals.
//!
//! Numbers are written as `{:.16e}` (17 significant digits), which round-trips every `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{BootstrapEnsemble, IntervalSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{validate_dataset, RegressionDataset};
use crate::scalar::Real;

/// Which CSV column holds the response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseColumn {
    /// Header name; requires a header row.
    Name(String),
    /// Zero-based column index.
    Index(usize),
    /// The last column.
    Last,
}

impl ResponseColumn {
    /// A numeric string selects by index, anything else by name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(s.to_string()),
        }
    }
}

/// Parsed CSV: the dataset and the predictor column names.
#[derive(Debug, Clone)]
pub struct CsvDataset<T> {
    pub dataset: RegressionDataset<T>,
    pub predictor_names: Vec<String>,
    pub response_name: String,
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Reads a numeric CSV. A first row containing any non-numeric cell is taken as a header.
/// Rows and columns in parse errors are 1-based file positions.
pub fn read_dataset_csv<T: Real>(reader: impl Read, response: &ResponseColumn) -> Result<CsvDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let first = match records.next() {
        None => return Err(Error::Parse {
            row: 1,
            col: 1,
            message: "empty file".into(),
        }),
        Some(r) => r.map_err(|e| csv_err(e, 1))?,
    };
    let has_header = first.iter().any(|c| c.parse::<f64>().is_err());
    let width = first.len();
    let names: Vec<String> = if has_header {
        first.iter().map(str::to_string).collect()
    } else {
        (0..width).map(|j| format!("x{j}")).collect()
    };
    let resp = match response {
        ResponseColumn::Index(i) if *i < width => *i,
        ResponseColumn::Index(i) => {
            return Err(Error::InvalidConfig(format!(
                "response column {i} out of range for {width} columns"
            )))
        }
        ResponseColumn::Last => width.saturating_sub(1),
        ResponseColumn::Name(name) => {
            if !has_header {
                return Err(Error::InvalidConfig(format!(
                    "response column '{name}' given by name but the file has no header"
                )));
            }
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidConfig(format!("no column named '{name}'")))?
        }
    };
    if width < 2 {
        return Err(Error::DimensionMismatch("need a response and at least one predictor".into()));
    }

    let mut rows: Vec<Vec<T>> = Vec::new();
    let mut y = Vec::new();
    let mut parse_row = |record: &csv::StringRecord, row: usize| -> Result<()> {
        if record.len() != width {
            return Err(Error::Parse {
                row,
                col: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let mut xs = Vec::with_capacity(width - 1);
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col: j + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    col: j + 1,
                    message: format!("'{cell}' is not finite"),
                });
            }
            if j == resp {
                y.push(T::lit(v));
            } else {
                xs.push(T::lit(v));
            }
        }
        rows.push(xs);
        Ok(())
    };
    if !has_header {
        parse_row(&first, 1)?;
    }
    for (k, record) in records.enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| csv_err(e, row))?;
        parse_row(&record, row)?;
    }
    let x = Matrix::from_rows(&rows)?;
    let dataset = validate_dataset(x, y, None, None)?;
    let response_name = names[resp].clone();
    let predictor_names = names
        .into_iter()
        .enumerate()
        .filter(|&(j, _)| j != resp)
        .map(|(_, n)| n)
        .collect();
    Ok(CsvDataset {
        dataset,
        predictor_names,
        response_name,
    })
}

fn csv_err(e: csv::Error, row: usize) -> Error {
    Error::Parse {
        row,
        col: 1,
        message: e.to_string(),
    }
}

pub fn read_dataset_csv_path<T: Real>(path: &Path, response: &ResponseColumn) -> Result<CsvDataset<T>> {
    let file = std::fs::File::open(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    read_dataset_csv(std::io::BufReader::new(file), response)
}

/// Writes a dataset as CSV with columns `x0..x{p-1},y`.
pub fn write_dataset_csv<T: Real>(w: impl Write, ds: &RegressionDataset<T>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..ds.p()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    wtr.write_record(&header).map_err(io_err)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.x().row(i).iter().map(|v| fmt_num(*v)).collect();
        rec.push(fmt_num(ds.y()[i]));
        wtr.write_record(&rec).map_err(io_err)?;
    }
    wtr.flush().map_err(io_err)
}

/// `{:.16e}` formatting of a scalar.
pub fn fmt_num<T: Real>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

/// One replicate per row, columns `beta_0..beta_{p-1}`.
pub fn write_ensemble_csv<T: Real>(w: impl Write, ens: &BootstrapEnsemble<T>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let p = ens.replicates.p();
    let header: Vec<String> = (0..p).map(|j| format!("beta_{j}")).collect();
    wtr.write_record(&header).map_err(io_err)?;
    for b in 0..ens.b() {
        let rec: Vec<String> = ens.replicates.replicate(b).into_iter().map(fmt_num).collect();
        wtr.write_record(&rec).map_err(io_err)?;
    }
    wtr.flush().map_err(io_err)
}

/// Columns `coordinate,lower,upper` plus `covered_truth` when `truth` is given.
pub fn write_intervals_csv<T: Real>(w: impl Write, ci: &IntervalSet<T>, truth: Option<&[T]>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["coordinate", "lower", "upper"];
    if truth.is_some() {
        header.push("covered_truth");
    }
    wtr.write_record(&header).map_err(io_err)?;
    for j in 0..ci.lower.len() {
        let mut rec = vec![j.to_string(), fmt_num(ci.lower[j]), fmt_num(ci.upper[j])];
        if let Some(t) = truth {
            rec.push(ci.covers(j, t[j]).to_string());
        }
        wtr.write_record(&rec).map_err(io_err)?;
    }
    wtr.flush().map_err(io_err)
}
