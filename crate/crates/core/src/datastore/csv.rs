//! Plain numeric CSV: one header row, comma-separated decimal cells, no quoting.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub values: Matrix,
}

impl CsvTable {
    /// Remove a named column, returning it alongside the remaining table.
    pub fn take_column(&self, name: &str) -> Result<(CsvTable, Vec<f64>)> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Usage(format!("no column named '{name}'")))?;
        let keep: Vec<usize> = (0..self.headers.len()).filter(|&c| c != idx).collect();
        Ok((
            CsvTable {
                headers: keep.iter().map(|&c| self.headers[c].clone()).collect(),
                values: self.values.select_cols(&keep),
            },
            self.values.column(idx),
        ))
    }
}

pub fn parse_csv(text: &str, path: &Path) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::format(path, "missing header row"));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::format(path, format!("line {}: column '{}': '{cell}' is not a number", i + 2, headers[c]))
            })?;
            if !v.is_finite() {
                return Err(Error::format(path, format!("line {}: non-finite value", i + 2)));
            }
            data.push(v);
        }
        rows += 1;
    }
    let values = Matrix::from_vec(rows, headers.len(), data).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(CsvTable { headers, values })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}
