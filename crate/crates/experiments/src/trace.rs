//! Trace files: one CSV row per recorded iterate per run.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use pgh_core::IterateRecord;
use serde::{Deserialize, Serialize};

use crate::error::ExpError;

/// Header of schema version 1. Readers reject any other header.
pub const TRACE_HEADER: &str =
    "run_id,kind,m,seed,t,lambda_t,delta_t,rel_error,leakage,objective,wall_time_ns";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub run_id: String,
    pub kind: String,
    pub m: usize,
    pub seed: u64,
    pub t: usize,
    pub lambda_t: f64,
    pub delta_t: f64,
    pub rel_error: Option<f64>,
    pub leakage: Option<usize>,
    pub objective: f64,
    pub wall_time_ns: u64,
}

impl TraceRow {
    pub fn new(run_id: &str, kind: &str, m: usize, seed: u64, rec: &IterateRecord) -> Self {
        Self {
            run_id: run_id.to_string(),
            kind: kind.to_string(),
            m,
            seed,
            t: rec.t,
            lambda_t: rec.lambda_t,
            delta_t: rec.delta_t,
            rel_error: rec.rel_error,
            leakage: rec.leakage,
            objective: rec.objective,
            wall_time_ns: rec.wall_time_ns,
        }
    }

    pub fn record(&self) -> IterateRecord {
        IterateRecord {
            t: self.t,
            lambda_t: self.lambda_t,
            delta_t: self.delta_t,
            rel_error: self.rel_error,
            leakage: self.leakage,
            objective: self.objective,
            wall_time_ns: self.wall_time_ns,
        }
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[TraceRow]) -> Result<(), ExpError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, rows: &[TraceRow]) -> Result<(), ExpError> {
    write_rows(File::create(path)?, rows)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRow>, ExpError> {
    let malformed = |reason: String| ExpError::Trace { path: path.to_path_buf(), reason };
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != TRACE_HEADER {
        return Err(malformed(format!("unexpected header `{header}`")));
    }
    r.deserialize().map(|row| row.map_err(|e| malformed(e.to_string()))).collect()
}
