//! Configuration parsing, mesh and solution I/O, time-series logging.

pub mod config;
pub mod gmsh;
pub mod vtk;

use crate::{Error, Real, Result};
use std::io::Write;
use std::path::Path;

/// Floating-point text format carrying 17 significant digits, enough to
/// round-trip an f64 bitwise.
pub fn fmt_full<T: Real>(v: T) -> String {
    format!("{:.16e}", v)
}

/// Reads a comma-separated table with one header line; `#` lines are
/// comments (used for provenance notes in the bundled data files).
pub fn read_csv_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true; // header line is named columns, skip
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            row.push(field.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad number '{field}': {e}"),
            })?);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Per-step scalar log written as CSV.
#[derive(Debug, Clone)]
pub struct TimeSeriesLog {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeriesLog {
    /// Base columns plus case-specific extras.
    pub fn new(extra: &[&str]) -> Self {
        let mut columns = vec![
            "step".to_string(),
            "time".to_string(),
            "nodes".to_string(),
            "elements".to_string(),
            "iterations".to_string(),
            "residual".to_string(),
        ];
        columns.extend(extra.iter().map(|s| s.to_string()));
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        if let Some(last) = self.rows.last() {
            assert!(row[0] > last[0], "step index must increase");
        }
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(|v| fmt_full(*v)).collect();
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}
