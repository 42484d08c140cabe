//! CSV and JSON file formats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use inert_core::analysis::TestReport;
use inert_core::simulate::TrajectoryBatch;
use inert_core::skorokhod::{ConstrainedPath, DrivingPath};
use inert_core::Point;

use crate::error::{SimError, SimResult};

fn writer(path: &Path) -> SimResult<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| SimError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn reader(path: &Path) -> SimResult<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| SimError::io(path, e))?;
    Ok(csv::Reader::from_reader(f))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn parse(s: &str, what: &str) -> SimResult<f64> {
    s.trim().parse().map_err(|_| SimError::Format(format!("{what}: cannot parse `{s}` as a number")))
}

fn expect_header(got: &csv::StringRecord, want: &[String], path: &Path) -> SimResult<()> {
    if got.iter().ne(want.iter().map(String::as_str)) {
        return Err(SimError::Format(format!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            want.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn path_header(d: usize) -> Vec<String> {
    std::iter::once("t".to_string()).chain((1..=d).map(|i| format!("x{i}"))).collect()
}

/// Reads a path file with header `t,x1,...,xd`.
pub fn read_path<const D: usize>(path: &Path) -> SimResult<DrivingPath<D>> {
    let mut r = reader(path)?;
    expect_header(r.headers()?, &path_header(D), path)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let what = format!("{} row {}", path.display(), line + 2);
        times.push(parse(&rec[0], &what)?);
        let mut p = Point::<D>::zeros();
        for i in 0..D {
            p[i] = parse(&rec[i + 1], &what)?;
        }
        values.push(p);
    }
    Ok(DrivingPath::new(times, values)?)
}

/// Writes a path file `t,x1,...,xd`.
pub fn write_path<const D: usize>(path: &Path, f: &DrivingPath<D>) -> SimResult<()> {
    let mut w = writer(path)?;
    w.write_record(path_header(D))?;
    for (t, x) in f.times().iter().zip(f.values()) {
        w.write_record(std::iter::once(num(*t)).chain(x.iter().map(|v| num(*v))))?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

/// Writes the constrained path as `t,x1,...,xd,ell`.
pub fn write_constrained<const D: usize>(path: &Path, sol: &ConstrainedPath<D>) -> SimResult<()> {
    let mut w = writer(path)?;
    w.write_record(path_header(D).into_iter().chain(std::iter::once("ell".to_string())))?;
    for ((t, g), l) in sol.times.iter().zip(&sol.g).zip(&sol.ell) {
        w.write_record(std::iter::once(num(*t)).chain(g.iter().map(|v| num(*v))).chain(std::iter::once(num(*l))))?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

fn trajectory_header(d: usize) -> Vec<String> {
    ["path_id".to_string(), "t".to_string()]
        .into_iter()
        .chain((1..=d).map(|i| format!("x{i}")))
        .chain((1..=d).map(|i| format!("k{i}")))
        .chain(std::iter::once("ell".to_string()))
        .collect()
}

/// Writes snapshots as `path_id,t,x1..xd,k1..kd,ell`.
pub fn write_trajectories<const D: usize>(path: &Path, batch: &TrajectoryBatch<D>) -> SimResult<()> {
    let mut w = writer(path)?;
    w.write_record(trajectory_header(D))?;
    for rec in &batch.records {
        for s in &rec.snapshots {
            w.write_record(
                [rec.path_id.to_string(), num(s.t)]
                    .into_iter()
                    .chain(s.x.iter().map(|v| num(*v)))
                    .chain(s.k.iter().map(|v| num(*v)))
                    .chain(std::iter::once(num(s.ell))),
            )?;
        }
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

/// Writes the log Girsanov weight at each snapshot as `path_id,t,log_weight`.
pub fn write_weights<const D: usize>(path: &Path, batch: &TrajectoryBatch<D>) -> SimResult<()> {
    let mut w = writer(path)?;
    w.write_record(["path_id", "t", "log_weight"])?;
    for rec in &batch.records {
        let Some(lw) = &rec.log_weights else { continue };
        for (s, l) in rec.snapshots.iter().zip(lw) {
            w.write_record([rec.path_id.to_string(), num(s.t), num(*l)])?;
        }
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

/// One snapshot row of a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow<const D: usize> {
    pub path_id: usize,
    pub t: f64,
    pub x: Point<D>,
    pub k: Point<D>,
    pub ell: f64,
}

pub fn read_trajectories<const D: usize>(path: &Path) -> SimResult<Vec<TrajectoryRow<D>>> {
    let mut r = reader(path)?;
    expect_header(r.headers()?, &trajectory_header(D), path)?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let what = format!("{} row {}", path.display(), line + 2);
        let path_id = rec[0].trim().parse().map_err(|_| SimError::Format(format!("{what}: bad path_id")))?;
        let mut x = Point::<D>::zeros();
        let mut k = Point::<D>::zeros();
        for i in 0..D {
            x[i] = parse(&rec[2 + i], &what)?;
            k[i] = parse(&rec[2 + D + i], &what)?;
        }
        rows.push(TrajectoryRow { path_id, t: parse(&rec[1], &what)?, x, k, ell: parse(&rec[2 + 2 * D], &what)? });
    }
    Ok(rows)
}

/// Rebuilds a batch (snapshots in file order) from trajectory rows.
pub fn batch_from_rows<const D: usize>(rows: &[TrajectoryRow<D>]) -> TrajectoryBatch<D> {
    let samples: Vec<(Point<D>, Point<D>)> = rows.iter().map(|r| (r.x, r.k)).collect();
    TrajectoryBatch::from_samples(&samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub config_id: String,
    pub f_id: String,
    pub residual: f64,
    pub tolerance: f64,
}

impl ResidualRow {
    pub fn pass(&self) -> bool {
        self.residual.abs() <= self.tolerance
    }
}

/// Writes `config_id,f_id,residual,tolerance,pass`.
pub fn write_residuals(path: &Path, rows: &[ResidualRow]) -> SimResult<()> {
    let mut w = writer(path)?;
    w.write_record(["config_id", "f_id", "residual", "tolerance", "pass"])?;
    for r in rows {
        w.write_record([r.config_id.clone(), r.f_id.clone(), num(r.residual), num(r.tolerance), r.pass().to_string()])?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

/// Writes one row per report: `test,verdict,statistic,threshold,effective_sample_size,notes`.
pub fn write_report(path: &Path, reports: &[TestReport]) -> SimResult<()> {
    let mut w = writer(path)?;
    w.write_record(["test", "verdict", "statistic", "threshold", "effective_sample_size", "notes"])?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            r.verdict.as_str().to_string(),
            num(r.statistic),
            num(r.threshold),
            num(r.sample_size),
            r.notes.clone(),
        ])?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

/// Writes the individual estimates behind the reports:
/// `test,label,estimate,expected,standard_error,allowed_se,pass`.
pub fn write_checks(path: &Path, reports: &[TestReport]) -> SimResult<()> {
    let mut w = writer(path)?;
    w.write_record(["test", "label", "estimate", "expected", "standard_error", "allowed_se", "pass"])?;
    for r in reports {
        for c in &r.checks {
            w.write_record([
                r.name.clone(),
                c.label.clone(),
                num(c.estimate),
                num(c.expected),
                num(c.standard_error),
                num(c.allowed_se),
                c.passed().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Writes `bin_lo,bin_hi,count`.
pub fn write_histogram(path: &Path, bins: &[Bin]) -> SimResult<()> {
    let mut w = writer(path)?;
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for b in bins {
        w.write_record([num(b.lo), num(b.hi), b.count.to_string()])?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> SimResult<()> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| SimError::io(path, e))?);
    f.write_all(text.as_bytes()).map_err(|e| SimError::io(path, e))?;
    f.flush().map_err(|e| SimError::io(path, e))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> SimResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
