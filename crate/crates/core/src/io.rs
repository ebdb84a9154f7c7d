//! CSV and JSON formats.
//!
//! CSV files are comma separated with a mandatory header row and `.` as the
//! decimal mark. Statistics tables may use an empty cell or `NA` for a
//! missing entry.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{PairOutcome, PtcTestReport};
use crate::project::condition_number;
use crate::tpdm::{IpMatrix, MatrixKind};

/// Named numeric columns read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub data: DMatrix<f64>,
}

fn parse_cell(cell: &str, row: usize, col: &str, allow_missing: bool) -> Result<f64> {
    let cell = cell.trim();
    if allow_missing && (cell.is_empty() || cell.eq_ignore_ascii_case("na")) {
        return Ok(f64::NAN);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Data(format!(
            "row {row}, column `{col}`: cannot parse {cell:?} as a finite number"
        ))),
    }
}

fn read_table_impl<R: Read>(reader: R, allow_missing: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Data("missing header row".into()));
    }
    if names.iter().all(|n| n.parse::<f64>().is_ok()) {
        return Err(Error::Data(
            "header row looks numeric; a header with column names is required".into(),
        ));
    }
    let p = names.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (idx, rec) in rdr.records().enumerate() {
        // line 1 is the header
        let row = idx + 2;
        let rec = rec?;
        if rec.len() != p {
            return Err(Error::Data(format!(
                "row {row}: expected {p} fields, found {}",
                rec.len()
            )));
        }
        for (c, cell) in rec.iter().enumerate() {
            values.push(parse_cell(cell, row, &names[c], allow_missing)?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data("no data rows".into()));
    }
    Ok(Table {
        names,
        data: DMatrix::from_row_slice(n, p, &values),
    })
}

/// Numeric table; every cell must be a finite number.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    read_table_impl(reader, false)
}

/// Square table of statistics; missing cells become NaN.
///
/// A leading non-numeric label column is dropped when the table has one more
/// column than rows.
pub fn read_stats_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let labelled = headers.len() == rows.len() + 1;
    let skip = usize::from(labelled);
    let names: Vec<String> = headers[skip..].to_vec();
    let p = names.len();
    if rows.len() != p {
        return Err(Error::Data(format!(
            "statistics table must be square: {} rows, {p} columns",
            rows.len()
        )));
    }
    let mut data = DMatrix::zeros(p, p);
    for (r, rec) in rows.iter().enumerate() {
        if rec.len() != headers.len() {
            return Err(Error::Data(format!(
                "row {}: expected {} fields, found {}",
                r + 2,
                headers.len(),
                rec.len()
            )));
        }
        for c in 0..p {
            data[(r, c)] = parse_cell(&rec[c + skip], r + 2, &names[c], true)?;
        }
    }
    // Fill a triangular table from its other half.
    for i in 0..p {
        for j in 0..p {
            if i != j && data[(i, j)].is_nan() && !data[(j, i)].is_nan() {
                data[(i, j)] = data[(j, i)];
            }
        }
    }
    for i in 0..p {
        for j in i + 1..p {
            let (a, b) = (data[(i, j)], data[(j, i)]);
            if !a.is_nan() && (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                return Err(Error::Data(format!(
                    "statistics table is not symmetric at ({}, {})",
                    names[i], names[j]
                )));
            }
        }
    }
    Ok(Table { names, data })
}

/// Write a table with a header row; values keep full precision.
pub fn write_table<W: Write>(writer: W, names: &[String], data: &DMatrix<f64>) -> Result<()> {
    if names.len() != data.ncols() {
        return Err(Error::Dimension {
            context: "write_table",
            expected: data.ncols(),
            got: names.len(),
        });
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(names)?;
    let mut buf = Vec::with_capacity(names.len());
    for row in data.row_iter() {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&buf)?;
    }
    wtr.flush()?;
    Ok(())
}

/// JSON view of a matrix with its metadata.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixDocument<'a> {
    pub kind: MatrixKind,
    pub names: &'a [String],
    pub entries: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_used: Option<Vec<Vec<usize>>>,
    pub condition_number: Option<f64>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

fn rows<T: Copy + nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl<'a> MatrixDocument<'a> {
    pub fn new(m: &IpMatrix, names: &'a [String]) -> Self {
        let cond = condition_number(m.entries());
        Self {
            kind: m.kind(),
            names,
            entries: rows(m.entries()),
            k_used: m.k_used().map(rows),
            condition_number: cond.is_finite().then_some(cond),
            extra: serde_json::Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Result<Self> {
        self.extra.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(self)
    }
}

/// One row per pair: names, estimates, statistic and decision.
pub fn write_report_csv<W: Write>(writer: W, report: &PtcTestReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "pair", "i", "j", "sigma_u", "tau2", "k", "t", "reject", "error",
    ])?;
    for o in &report.outcomes {
        let (i, j) = o.indices();
        let pair = format!("{}|{}", report.names[i], report.names[j]);
        let fields: Vec<String> = match o {
            PairOutcome::Tested(r) => {
                let (s, t2, k) = r
                    .detail
                    .as_ref()
                    .map(|d| (d.sigma_u.to_string(), d.tau2.to_string(), d.k.to_string()))
                    .unwrap_or_default();
                vec![
                    pair,
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    s,
                    t2,
                    k,
                    r.t_stat.to_string(),
                    r.reject.to_string(),
                    String::new(),
                ]
            }
            PairOutcome::Failed { reason, .. } => vec![
                pair,
                (i + 1).to_string(),
                (j + 1).to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                reason.clone(),
            ],
        };
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}
