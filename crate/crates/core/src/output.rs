//! Result files.
//!
//! CSV is UTF-8 with LF line endings and `.` decimals, header
//! `axis,value,seed,scheme,rate_bps_hz,outer_iters,wall_ms,flags`. Floats use
//! Rust's shortest round-trip formatting, so identical inputs give identical
//! bytes. `wall_ms` is left empty unless timing is requested, since timings
//! differ between runs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::baselines::Scheme;
use crate::harness::SweepRow;
use crate::solver::SolveTrace;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "axis",
    "value",
    "seed",
    "scheme",
    "rate_bps_hz",
    "outer_iters",
    "wall_ms",
    "flags",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format {other:?} (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmitOptions {
    pub format: Format,
    /// Emit measured wall-clock times (breaks byte-for-byte reproducibility).
    pub timing: bool,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Internal(format!("csv writer: {e}"))
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W, timing: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in rows {
        let rate = r.rate_bps_hz.map(|x| x.to_string()).unwrap_or_default();
        let wall = if timing { format!("{:.3}", r.wall_ms) } else { String::new() };
        w.write_record([
            r.axis.as_str().to_string(),
            r.value.to_string(),
            r.seed.to_string(),
            r.scheme.to_string(),
            rate,
            r.outer_iters.to_string(),
            wall,
            r.flags.clone(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Internal(format!("csv writer: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct JsonRow<'a> {
    axis: &'a str,
    value: f64,
    seed: u64,
    scheme: Scheme,
    rate_bps_hz: Option<f64>,
    outer_iters: usize,
    wall_ms: Option<f64>,
    flags: &'a str,
}

pub fn write_json<W: Write>(rows: &[SweepRow], out: W, timing: bool) -> Result<()> {
    let rows: Vec<JsonRow> = rows
        .iter()
        .map(|r| JsonRow {
            axis: r.axis.as_str(),
            value: r.value,
            seed: r.seed,
            scheme: r.scheme,
            rate_bps_hz: r.rate_bps_hz,
            outer_iters: r.outer_iters,
            wall_ms: timing.then_some(r.wall_ms),
            flags: &r.flags,
        })
        .collect();
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| Error::Internal(e.to_string()))?;
    out.write_all(b"\n").map_err(|e| Error::Internal(e.to_string()))?;
    Ok(())
}

/// Mean and standard deviation of the rate per (value, scheme).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub value: f64,
    pub scheme: Scheme,
    pub runs: usize,
    pub failed: usize,
    pub mean_rate: f64,
    /// Population standard deviation.
    pub std_rate: f64,
}

fn order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

pub fn aggregate(rows: &[SweepRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(u64, Scheme), (f64, Vec<f64>, usize)> = BTreeMap::new();
    for r in rows {
        let e = groups
            .entry((order_key(r.value), r.scheme))
            .or_insert((r.value, Vec::new(), 0));
        match r.rate_bps_hz {
            Some(x) => e.1.push(x),
            None => e.2 += 1,
        }
    }
    groups
        .into_iter()
        .map(|((_, scheme), (value, rates, failed))| {
            let n = rates.len() as f64;
            let (mean, std) = if rates.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let mean = rates.iter().sum::<f64>() / n;
                let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            };
            Aggregate {
                value,
                scheme,
                runs: rates.len() + failed,
                failed,
                mean_rate: mean,
                std_rate: std,
            }
        })
        .collect()
}

/// `key = value` summary with one `[[point]]` table per aggregate.
pub fn write_summary<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Internal(format!("summary writer: {e}"));
    let axis = rows.first().map(|r| r.axis.as_str()).unwrap_or("none");
    writeln!(out, "axis = \"{axis}\"").map_err(io)?;
    writeln!(out, "rows = {}", rows.len()).map_err(io)?;
    for a in aggregate(rows) {
        writeln!(out).map_err(io)?;
        writeln!(out, "[[point]]").map_err(io)?;
        writeln!(out, "value = {}", toml_float(a.value)).map_err(io)?;
        writeln!(out, "scheme = \"{}\"", a.scheme).map_err(io)?;
        writeln!(out, "runs = {}", a.runs).map_err(io)?;
        writeln!(out, "failed = {}", a.failed).map_err(io)?;
        writeln!(out, "mean_rate_bps_hz = {}", toml_float(a.mean_rate)).map_err(io)?;
        writeln!(out, "std_rate_bps_hz = {}", toml_float(a.std_rate)).map_err(io)?;
    }
    Ok(())
}

fn toml_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x:?}")
    }
}

/// Per-iteration convergence data: `part,iter,surrogate,sum_rate,power,c1_residual,manifold_iters`.
/// Iteration 0 is the initial point.
pub fn write_trace_csv<W: Write>(parts: &[(String, &SolveTrace)], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["part", "iter", "surrogate", "sum_rate", "power", "c1_residual", "manifold_iters"])
        .map_err(csv_error)?;
    for (name, trace) in parts {
        w.write_record([name.as_str(), "0", &trace.initial.to_string(), &trace.initial.to_string(), "", "", ""])
            .map_err(csv_error)?;
        for (i, r) in trace.iterations.iter().enumerate() {
            w.write_record([
                name.clone(),
                (i + 1).to_string(),
                r.surrogate.to_string(),
                r.sum_rate.to_string(),
                r.power.to_string(),
                r.c1_residual.to_string(),
                r.manifold_iters.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| Error::Internal(format!("csv writer: {e}")))?;
    Ok(())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(mut w: std::io::BufWriter<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write `results.csv` (or `results.json`) and `summary.toml` into `dir`,
/// creating it if needed. Returns the written paths.
pub fn emit_results(rows: &[SweepRow], dir: &Path, opts: &EmitOptions) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results = dir.join(match opts.format {
        Format::Csv => "results.csv",
        Format::Json => "results.json",
    });
    let mut w = create(&results)?;
    match opts.format {
        Format::Csv => write_csv(rows, &mut w, opts.timing)?,
        Format::Json => write_json(rows, &mut w, opts.timing)?,
    }
    finish(w, &results)?;
    let summary = dir.join("summary.toml");
    let mut w = create(&summary)?;
    write_summary(rows, &mut w)?;
    finish(w, &summary)?;
    Ok(vec![results, summary])
}

/// Write the convergence traces of a single solve to `dir/trace.csv`.
pub fn emit_trace(parts: &[(String, &SolveTrace)], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("trace.csv");
    let mut w = create(&path)?;
    write_trace_csv(parts, &mut w)?;
    finish(w, &path)?;
    Ok(path)
}
