//! CSV ingestion and extraction of a linearly independent column subset.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};
use crate::linalg::InstanceMatrix;

/// Default relative pivot threshold for [`independent_columns`].
pub const DEFAULT_COLUMN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub skip_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            skip_header: false,
        }
    }
}

/// A dense numeric table, row-major, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub values: Vec<f64>,
    pub source: Option<PathBuf>,
    pub header_skipped: bool,
}

impl RawMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ncols + j]
    }

    /// Divides every entry by the largest absolute entry and returns that
    /// divisor (1 for an all-zero matrix).
    pub fn scale_max_abs(&mut self) -> f64 {
        let m = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= m);
            m
        } else {
            1.0
        }
    }

    /// Copy restricted to `cols`, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nrows * cols.len());
        for i in 0..self.nrows {
            out.extend(cols.iter().map(|&j| self.get(i, j)));
        }
        out
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<RawMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut m = parse_csv(&text, opts)?;
    m.source = Some(path.to_path_buf());
    Ok(m)
}

/// Parses CSV text. Row and column numbers in errors are 1-based and count
/// the header line when present.
pub fn parse_csv(text: &str, opts: &CsvOptions) -> Result<RawMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        if idx == 0 && opts.skip_header {
            continue;
        }
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        let expected = *ncols.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows {
                row: line,
                expected,
                found: record.len(),
            });
        }
        for (c, field) in record.iter().enumerate() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::NonNumeric {
                        row: line,
                        column: c + 1,
                        value: field.to_string(),
                    })
                }
            }
        }
        nrows += 1;
    }
    let ncols = ncols.unwrap_or(0);
    if nrows == 0 || ncols == 0 {
        return Err(Error::Parse {
            line: 1,
            column: 0,
            message: "no numeric rows".into(),
        });
    }
    Ok(RawMatrix {
        nrows,
        ncols,
        values,
        source: None,
        header_skipped: opts.skip_header,
    })
}

/// Indices (ascending) of the columns picked by column-pivoted QR whose
/// pivot exceeds `tol` times the largest pivot.
pub fn independent_column_indices(a: &RawMatrix, tol: f64) -> Result<Vec<usize>> {
    let m = DMatrix::from_row_slice(a.nrows, a.ncols, &a.values);
    let qr = m.col_piv_qr();
    let rf = qr.r();
    let steps = a.nrows.min(a.ncols);
    let lead = if steps == 0 { 0.0 } else { rf[(0, 0)].abs() };
    if lead == 0.0 {
        return Err(Error::RankZero);
    }
    let kept = (0..steps)
        .take_while(|&k| rf[(k, k)].abs() > tol * lead)
        .count();
    let mut order = RowDVector::from_iterator(a.ncols, (0..a.ncols).map(|j| j as f64));
    qr.p().permute_columns(&mut order);
    let mut cols: Vec<usize> = order.iter().take(kept).map(|&j| j as usize).collect();
    cols.sort_unstable();
    Ok(cols)
}

/// Keeps a maximal independent set of original columns, in original order.
pub fn independent_columns(a: &RawMatrix, tol: f64) -> Result<InstanceMatrix> {
    let cols = independent_column_indices(a, tol)?;
    if cols.len() >= a.nrows {
        return Err(Error::NotTall {
            kept: cols.len(),
            rows: a.nrows,
        });
    }
    InstanceMatrix::new(a.nrows, cols.len(), a.select_columns(&cols))
}
