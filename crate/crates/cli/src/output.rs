//! CSV tables, run records and plot files.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use distgen_core::distributed::{CellSummary, SweepRow};

use crate::error::{CliError, Result};

pub const SWEEP_HEADER: [&str; 14] = [
    "experiment",
    "K",
    "n",
    "repeat",
    "seed",
    "gen_gap",
    "emp_risk_local",
    "emp_risk_agg",
    "emp_risk_agg_margin",
    "pop_risk",
    "delta_emp",
    "bound_expected",
    "bound_tail",
    "bound_centralized",
];

/// Shortest round-trip text for `v`, in exponent form outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn metric_fields(r: &SweepRow) -> [String; 9] {
    [
        num(r.gen_gap),
        num(r.emp_risk_local),
        num(r.emp_risk_agg),
        num(r.emp_risk_agg_margin),
        num(r.pop_risk),
        num(r.delta_emp),
        opt(r.bound_expected),
        opt(r.bound_tail),
        opt(r.bound_centralized),
    ]
}

/// Per-repeat rows in the fixed sweep schema.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| CliError::Csv {
        path: PathBuf::from("<memory>"),
        source,
    };
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.experiment.as_str().to_string(),
            r.k.to_string(),
            r.n.to_string(),
            r.repeat.to_string(),
            r.seed.to_string(),
        ];
        rec.extend(metric_fields(r));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

/// Cell means and standard errors; `repeat` holds `mean` or `se` and `seed` is empty.
pub fn summary_csv(cells: &[CellSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| CliError::Csv {
        path: PathBuf::from("<memory>"),
        source,
    };
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for c in cells {
        for (label, row) in [("mean", &c.mean), ("se", &c.se)] {
            let mut rec = vec![
                c.experiment.as_str().to_string(),
                c.k.to_string(),
                c.n.to_string(),
                label.to_string(),
                String::new(),
            ];
            rec.extend(metric_fields(row));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Any table with a header row.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| CliError::Csv {
        path: PathBuf::from("<memory>"),
        source,
    };
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| CliError::Io {
        path: PathBuf::from("<memory>"),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Result section that depends only on the configuration and input files.
#[derive(Debug, Serialize)]
pub struct Deterministic<'a, C: Serialize, R: Serialize> {
    pub command: &'a str,
    pub config: &'a C,
    pub results: &'a R,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
}

impl Timing {
    pub fn new(started: SystemTime, elapsed: Duration) -> Self {
        Self {
            started_unix_seconds: started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_seconds: elapsed.as_secs_f64(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunRecord<'a, C: Serialize, R: Serialize> {
    pub version: String,
    pub deterministic: Deterministic<'a, C, R>,
    pub timing: Timing,
}

pub fn version_string() -> String {
    format!("distgen {}", env!("CARGO_PKG_VERSION"))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("records serialize");
    s.push('\n');
    s
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
