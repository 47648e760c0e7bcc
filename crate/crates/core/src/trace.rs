//! Serialization of run traces as JSONL or CSV.
//!
//! JSONL carries one object per evaluation followed by one summary object;
//! CSV carries the same per-evaluation columns with `x` flattened to
//! `x0..x{D-1}` and no summary. Output is UTF-8 with LF line endings, and
//! identical traces always produce identical bytes.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::optimizer::{RunTrace, TraceRecord};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("writing trace to {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unknown trace format {0:?} (expected jsonl or csv)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceFormat {
    #[default]
    Jsonl,
    Csv,
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceFormat::Jsonl => "jsonl",
            TraceFormat::Csv => "csv",
        })
    }
}

impl FromStr for TraceFormat {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(TraceFormat::Jsonl),
            "csv" => Ok(TraceFormat::Csv),
            other => Err(TraceError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TraceOptions {
    /// Write every wall-clock field as 0 so that reruns are byte-identical.
    pub redact_timings: bool,
    /// Configuration echoed into the summary line; defaults to the run's `BoConfig`.
    pub echo: Option<Value>,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    summary: Summary<'a>,
}

#[derive(Serialize)]
struct Summary<'a> {
    best_x: &'a [f64],
    best_y: f64,
    total_s: f64,
    evaluations: usize,
    refits: usize,
    jitter_refits: usize,
    failures: usize,
    config: Value,
}

fn redacted(r: &TraceRecord, opts: &TraceOptions) -> TraceRecord {
    let mut r = r.clone();
    if opts.redact_timings {
        r.t_factor_s = 0.0;
        r.t_acq_s = 0.0;
    }
    r
}

pub fn write_jsonl<W: Write>(trace: &RunTrace, opts: &TraceOptions, mut out: W) -> io::Result<()> {
    for r in &trace.records {
        serde_json::to_writer(&mut out, &redacted(r, opts))?;
        out.write_all(b"\n")?;
    }
    let config = match &opts.echo {
        Some(v) => v.clone(),
        None => serde_json::to_value(&trace.config)?,
    };
    let line = SummaryLine {
        summary: Summary {
            best_x: &trace.summary.best_x,
            best_y: trace.summary.best_y,
            total_s: if opts.redact_timings {
                0.0
            } else {
                trace.summary.total_s
            },
            evaluations: trace.records.len(),
            refits: trace.refit_count(),
            jitter_refits: trace.summary.jitter_refits,
            failures: trace.failures.len(),
            config,
        },
    };
    serde_json::to_writer(&mut out, &line)?;
    out.write_all(b"\n")?;
    out.flush()
}

pub fn csv_header(dim: usize) -> String {
    let mut cols = vec!["iteration".to_string(), "round".to_string()];
    cols.extend((0..dim).map(|i| format!("x{i}")));
    cols.extend(
        ["y", "best", "t_factor_s", "t_acq_s", "refit"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

pub fn write_csv<W: Write>(trace: &RunTrace, opts: &TraceOptions, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", csv_header(trace.config.bounds.dim()))?;
    for r in &trace.records {
        let r = redacted(r, opts);
        write!(out, "{},{}", r.iteration, r.round)?;
        for v in &r.x {
            write!(out, ",{v}")?;
        }
        writeln!(
            out,
            ",{},{},{},{},{}",
            r.y, r.best, r.t_factor_s, r.t_acq_s, r.refit
        )?;
    }
    out.flush()
}

pub fn write_trace<W: Write>(
    trace: &RunTrace,
    format: TraceFormat,
    opts: &TraceOptions,
    out: W,
) -> io::Result<()> {
    match format {
        TraceFormat::Jsonl => write_jsonl(trace, opts, out),
        TraceFormat::Csv => write_csv(trace, opts, out),
    }
}

/// Writes the trace to `path`, replacing any existing file.
pub fn emit_trace(
    trace: &RunTrace,
    format: TraceFormat,
    path: &Path,
    opts: &TraceOptions,
) -> Result<(), TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_trace(trace, format, opts, BufWriter::new(file)).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{run, BoConfig, Bounds};

    fn constant_trace() -> RunTrace {
        let config = BoConfig {
            n_seeds: 3,
            iterations: 2,
            restarts: 3,
            ..BoConfig::new(Bounds::cube(-1.0, 1.0, 2).unwrap())
        };
        run(&config, &|_: &[f64]| 0.0).unwrap()
    }

    #[test]
    fn jsonl_rows_and_summary() {
        let trace = constant_trace();
        let mut buf = Vec::new();
        write_jsonl(&trace, &TraceOptions::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3 + 2 + 1);
        let first: Value = serde_json::from_str(lines[0]).unwrap();
        for key in ["iteration", "round", "x", "y", "best", "t_factor_s", "t_acq_s", "refit"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert!(first.get("ei").is_none());
        let summary: Value = serde_json::from_str(lines[5]).unwrap();
        let s = &summary["summary"];
        assert_eq!(s["best_y"], 0.0);
        assert_eq!(s["config"]["iterations"], 2);
        assert_eq!(s["config"]["lag"], "inf");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn csv_columns() {
        let trace = constant_trace();
        let mut buf = Vec::new();
        write_csv(&trace, &TraceOptions::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(header, "iteration,round,x0,x1,y,best,t_factor_s,t_acq_s,refit");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.split(',').count() == 7 + 2));
    }

    #[test]
    fn redaction_is_byte_stable() {
        let a = constant_trace();
        let b = constant_trace();
        let opts = TraceOptions {
            redact_timings: true,
            echo: None,
        };
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_jsonl(&a, &opts, &mut ba).unwrap();
        write_jsonl(&b, &opts, &mut bb).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn io_error_names_path() {
        let trace = constant_trace();
        let path = Path::new("/nonexistent-dir/trace.jsonl");
        let err = emit_trace(&trace, TraceFormat::Jsonl, path, &TraceOptions::default()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/trace.jsonl"));
    }
}
