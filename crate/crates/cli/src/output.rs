use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One CSV file: a header and rows of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: Vec<&'static str>) -> Self {
        Self { name: name.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_io)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_io(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

/// Shortest round-trip formatting.
pub(crate) fn num(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Provenance written next to the tables as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub version: String,
    /// Hex SHA-256 of the effective configuration in TOML form.
    pub config_hash: String,
    pub seed: u64,
    pub reps: usize,
    pub workers: usize,
    pub wall_time_s: f64,
    pub noncrossing_rate: Option<f64>,
    /// `None` for experiments without a verdict.
    pub pass: Option<bool>,
    pub flags: Vec<String>,
    pub tables: Vec<String>,
}

/// Result of [`crate::run`].
#[derive(Debug, Clone)]
pub struct Bundle {
    pub config_toml: String,
    pub tables: Vec<Table>,
    pub manifest: RunManifest,
}

impl Bundle {
    /// Process exit status: 0 when nothing failed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.manifest.pass == Some(false) { 1 } else { 0 }
    }
}

/// Writes `config.toml`, one CSV per table and `manifest.json` into `dir`.
pub fn write_bundle(bundle: &Bundle, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<(), CliError> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put("config.toml", &bundle.config_toml)?;
    for t in &bundle.tables {
        put(&format!("{}.csv", t.name), &t.to_csv()?)?;
    }
    let manifest = serde_json::to_string_pretty(&bundle.manifest).expect("manifest serialises");
    put("manifest.json", &manifest)?;
    Ok(written)
}
