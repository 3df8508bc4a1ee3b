//! CSV tables and the JSON run-metadata sidecar.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Real)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }
}

/// Shortest decimal that round-trips (at most 17 significant digits), in
/// exponent form for very large or small magnitudes.
fn format_real(v: f64) -> Option<String> {
    v.is_finite().then(|| format!("{v:?}"))
}

/// Renders `table` as CSV with LF line endings.
pub fn render_csv(table: &Table) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let width = table.header.len();
    w.write_record(&table.header)?;
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() != width {
            return Err(CliError::Output(format!(
                "row {i} has {} cells, header has {width}",
                row.len()
            )));
        }
        let mut fields = Vec::with_capacity(width);
        for (j, cell) in row.iter().enumerate() {
            fields.push(match cell {
                Cell::Real(v) => format_real(*v).ok_or_else(|| {
                    CliError::Output(format!("non-finite value {v} in row {i}, column `{}`", table.header[j]))
                })?,
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => s.clone(),
                Cell::Empty => String::new(),
            });
        }
        w.write_record(&fields)?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

/// Writes `table` to `path`. Nothing is written if any cell is rejected.
pub fn emit_csv(table: &Table, path: &Path) -> Result<(), CliError> {
    let bytes = render_csv(table)?;
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| CliError::io(path, e))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub armdp: &'static str,
    pub armdp_cli: &'static str,
}

#[derive(Debug, Serialize)]
pub struct RunMetadata<'a, C: Serialize> {
    pub command: &'a str,
    pub config: &'a C,
    pub versions: Versions,
    pub seed: u64,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    /// Free-form facts a reader of the CSVs needs, e.g. inferred parameters.
    pub notes: serde_json::Value,
}

pub fn versions() -> Versions {
    Versions {
        armdp: armdp::VERSION,
        armdp_cli: env!("CARGO_PKG_VERSION"),
    }
}

pub fn write_metadata<C: Serialize>(meta: &RunMetadata<'_, C>, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(meta).map_err(|e| CliError::Output(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
