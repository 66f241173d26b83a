//! CSV and JSON emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Fixed textual form for floats so reruns are byte-identical: shortest
/// round-trip decimal, switching to exponent form for very small or large
/// magnitudes.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e7).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// A CSV file with a `#` comment block above the header row.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let io_err = |source| CliError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for line in &self.comments {
            writeln!(out, "# {line}").map_err(io_err)?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// Per-point solver bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub index: usize,
    pub parameter: f64,
    pub cutoffs: Vec<usize>,
    pub residual: f64,
    pub tail_population: f64,
    /// `ok`, or the failure message.
    pub status: String,
}

/// Re-solve of one row at twice its cutoff.
#[derive(Debug, Clone, Serialize)]
pub struct SpotCheck {
    pub row: usize,
    pub cutoff: usize,
    pub doubled_cutoff: usize,
    pub mean_n: f64,
    pub mean_n_doubled: f64,
    pub relative_change: f64,
    pub passed: bool,
}

/// Sidecar record written next to every run's data files.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub library_version: String,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
    pub points: Vec<PointRecord>,
    pub spot_checks: Vec<SpotCheck>,
    pub failures: usize,
    pub notes: serde_json::Value,
    pub wall_clock_seconds: f64,
}
