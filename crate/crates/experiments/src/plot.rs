//! Aggregation of trace files into plot series.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::ExpError;
use crate::trace::{read_trace_file, TraceRow};

/// Floor applied before taking logarithms of exact zeros.
const LOG_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotPoint {
    pub t: usize,
    pub mean_log_rel_error: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Mean and min/max band of `ln rel_error` across runs at every `t`.
///
/// A run that stopped before `t` contributes its last value.
pub fn aggregate(rows: &[TraceRow]) -> Result<Vec<PlotPoint>, String> {
    let mut runs: BTreeMap<&str, BTreeMap<usize, f64>> = BTreeMap::new();
    for row in rows {
        let e = row.rel_error.ok_or_else(|| format!("run {} has no rel_error at t = {}", row.run_id, row.t))?;
        runs.entry(&row.run_id).or_default().insert(row.t, e.max(LOG_FLOOR).ln());
    }
    let Some(t_end) = runs.values().filter_map(|s| s.keys().next_back()).max().copied() else {
        return Err("no rows".into());
    };
    let mut points = Vec::with_capacity(t_end + 1);
    for t in 0..=t_end {
        let values: Vec<f64> =
            runs.values().filter_map(|s| s.range(..=t).next_back().map(|(_, &v)| v)).collect();
        if values.is_empty() {
            continue;
        }
        points.push(PlotPoint {
            t,
            mean_log_rel_error: values.iter().sum::<f64>() / values.len() as f64,
            lo: values.iter().copied().fold(f64::INFINITY, f64::min),
            hi: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(points)
}

pub fn write_points<W: Write>(out: W, points: &[PlotPoint]) -> Result<(), ExpError> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// `trace_<scenario>.csv` becomes `plot_<scenario>.csv`.
pub fn plot_file_name(trace: &Path) -> String {
    let stem = trace.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    format!("plot_{}.csv", stem.strip_prefix("trace_").unwrap_or(stem))
}

/// Writes one series file per trace file (one scenario each) into `out_dir`.
pub fn emit_plot_data(traces: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, ExpError> {
    if traces.is_empty() {
        return Err(ExpError::EmptyTraces("no trace files given".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::with_capacity(traces.len());
    for trace in traces {
        let rows = read_trace_file(trace)?;
        if rows.is_empty() {
            return Err(ExpError::EmptyTraces(format!("{} has no rows", trace.display())));
        }
        let points = aggregate(&rows)
            .map_err(|reason| ExpError::Trace { path: trace.clone(), reason })?;
        let path = out_dir.join(plot_file_name(trace));
        write_points(File::create(&path)?, &points)?;
        files.push(path);
    }
    Ok(files)
}
