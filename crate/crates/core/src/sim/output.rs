//! CSV and JSON result files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::harness::{Gap, ResultRow, SweepResult};
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 7] =
    ["axis_name", "axis_value", "scheme", "mean_sum_rate_bps_hz", "stderr", "trials", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

/// JSON document layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub rows: Vec<ResultRow>,
    pub config: SimConfig,
    pub fingerprint: String,
    #[serde(default)]
    pub gaps: Vec<Gap>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        other => Error::Serialization(format!("{other:?}")),
    }
}

/// Writes the rows as CSV (header always present).
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `result` to `path` in the given format.
pub fn write_results(result: &SweepResult, path: &Path, format: OutputFormat) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        OutputFormat::Csv => write_csv(&result.rows, &mut out).map_err(|e| csv_err(path, e))?,
        OutputFormat::Json => {
            let doc = ResultDocument {
                rows: result.rows.clone(),
                config: result.config.clone(),
                fingerprint: result.fingerprint.clone(),
                gaps: result.gaps.clone(),
            };
            serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Serialization(e.to_string()))?;
            out.write_all(b"\n").map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Serialization(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn read_json(path: &Path) -> Result<ResultDocument> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))
}
