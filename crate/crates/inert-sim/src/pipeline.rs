//! The subcommand pipelines. Each entry point dispatches on the configured
//! dimension; all files are written from the calling thread.

use std::path::{Path, PathBuf};

use inert_core::analysis::{
    independence_test, k_moment_tests, ks_uniformity, mean_with_se, sector_uniformity, weak_convergence_sweep, Check,
    SweepConfig, TestReport, Verdict,
};
use inert_core::simulate::{run_ensemble_with, Dynamics, TrajectoryBatch};
use inert_core::skorokhod::solve_skorokhod;
use inert_core::stationary::{bump_basis, stationarity_residual, StationaryMeasure};
use serde_json::{json, Value};

use crate::config::{RunConfig, TestKind};
use crate::error::{SimError, SimResult};
use crate::exec::Rayon;
use crate::histogram::emit_histograms;
use crate::io::{
    batch_from_rows, read_path, read_trajectories, write_checks, write_constrained, write_json, write_report, write_residuals,
    write_trajectories, write_weights, ResidualRow,
};

macro_rules! by_dimension {
    ($d:expr, $f:ident, $($arg:expr),*) => {
        match $d {
            1 => $f::<1>($($arg),*),
            2 => $f::<2>($($arg),*),
            3 => $f::<3>($($arg),*),
            d => Err(SimError::Config { field: "dimension".into(), message: format!("unsupported dimension {d}") }),
        }
    };
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub dry_run: bool,
    /// Inconclusive tests fail the run.
    pub strict: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub reports: Vec<TestReport>,
    pub files: Vec<PathBuf>,
    pub exit_code: i32,
}

/// 0 when every report passes (or is inconclusive outside strict mode), 1 otherwise.
pub fn exit_code(reports: &[TestReport], strict: bool) -> i32 {
    let bad = reports.iter().any(|r| match r.verdict {
        Verdict::Pass => false,
        Verdict::Fail => true,
        Verdict::Inconclusive => strict,
    });
    i32::from(bad)
}

fn manifest(cfg: &RunConfig, command: &str, status: &str, extra: Value) -> SimResult<Value> {
    let mut m = json!({
        "tool": "inert-sim",
        "command": command,
        "versions": { "inert-sim": env!("CARGO_PKG_VERSION"), "inert-core": inert_core::VERSION },
        "rng": "ChaCha8 seeded from the root seed, stream = path id",
        "seed": cfg.simulation.seed,
        "status": status,
        "config": serde_json::to_value(cfg)?,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut m, extra) {
        m.extend(e);
    }
    Ok(m)
}

fn file_names(files: &[PathBuf]) -> Vec<String> {
    files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect()
}

fn report_summary(reports: &[TestReport]) -> Value {
    Value::Array(reports.iter().map(|r| json!({ "test": r.name, "verdict": r.verdict.as_str() })).collect())
}

fn create_dir(dir: &Path) -> SimResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))
}

/// Writes an error manifest next to whatever was produced, then returns the error.
fn finish_with_error<T>(cfg: &RunConfig, command: &str, dir: &Path, files: &[PathBuf], err: SimError) -> SimResult<T> {
    let m = manifest(cfg, command, "error", json!({ "error": err.to_string(), "files": file_names(files) }))?;
    write_json(&dir.join("manifest.json"), &m)?;
    Err(err)
}

pub fn run(cfg: &RunConfig, dir: &Path, opts: RunOptions) -> SimResult<Outcome> {
    by_dimension!(cfg.dimension, run_dim, cfg, dir, opts)
}

fn run_dim<const D: usize>(cfg: &RunConfig, dir: &Path, opts: RunOptions) -> SimResult<Outcome> {
    let setup = cfg.build::<D>()?;
    create_dir(dir)?;
    if opts.dry_run {
        let m = manifest(cfg, "run", "dry_run", json!({ "files": [] }))?;
        write_json(&dir.join("manifest.json"), &m)?;
        return Ok(Outcome { reports: Vec::new(), files: vec![dir.join("manifest.json")], exit_code: 0 });
    }
    let mut files = Vec::new();
    match run_stages(cfg, &setup, dir, &mut files) {
        Ok((reports, diagnostics)) => {
            let code = exit_code(&reports, opts.strict);
            files.push(dir.join("manifest.json"));
            let m = manifest(
                cfg,
                "run",
                "ok",
                json!({
                    "diagnostics": diagnostics,
                    "reports": report_summary(&reports),
                    "exit_code": code,
                    "files": file_names(&files),
                }),
            )?;
            write_json(&dir.join("manifest.json"), &m)?;
            Ok(Outcome { reports, files, exit_code: code })
        }
        Err(e) => finish_with_error(cfg, "run", dir, &files, e),
    }
}

fn run_stages<const D: usize>(
    cfg: &RunConfig,
    setup: &crate::config::Setup<D>,
    dir: &Path,
    files: &mut Vec<PathBuf>,
) -> SimResult<(Vec<TestReport>, Value)> {
    let sm = setup.measure()?;
    let sim = setup.resolved_sim(&sm)?;
    let batch = run_ensemble_with(&Rayon, &setup.cs, &setup.dynamics, &sim)?;
    let traj = dir.join("trajectories.csv");
    write_trajectories(&traj, &batch)?;
    files.push(traj);
    let driftless = matches!(setup.dynamics, Dynamics::DriftlessReflected);
    if driftless {
        let w = dir.join("weights.csv");
        write_weights(&w, &batch)?;
        files.push(w);
    }
    let d = &batch.diagnostics;
    let (max_k_half, max_k) = batch.max_k();
    let diagnostics = json!({
        "paths": batch.records.len(),
        "snapshots": batch.len(),
        "boundary_overflow": d.boundary_overflow,
        "reflect_failures": d.reflect_failures,
        "weight_overflow": d.weight_overflow,
        "one_sided_stencils": d.one_sided_stencils,
        "substeps": d.substeps,
        "max_k_first_half": max_k_half,
        "max_k": max_k,
    });

    let mut reports = vec![path_flag_report(&batch)];
    let mut all_residuals = Vec::new();
    for kind in &cfg.tests.battery {
        if driftless && matches!(kind, TestKind::Ks | TestKind::KMoments | TestKind::Independence | TestKind::Sectors) {
            reports.push(not_applicable(kind, "the driftless dynamics do not target the stationary law"));
            continue;
        }
        match kind {
            TestKind::Ks => {
                for axis in 0..D {
                    reports.push(ks_uniformity(&batch, &sm, axis)?);
                }
            }
            TestKind::KMoments => reports.push(k_moment_tests(&batch, &sm)?),
            TestKind::Independence => reports.push(independence_test(&batch)?),
            TestKind::Sectors => {
                if D < 2 {
                    reports.push(not_applicable(kind, "needs dimension >= 2"));
                } else {
                    reports.push(sector_uniformity(&batch, &sm, cfg.tests.sectors)?);
                }
            }
            TestKind::Residual => {
                let rows = residual_rows(&cfg.name, &sm, cfg.tests.residual_tolerance(D))?;
                reports.push(residual_report(&rows));
                all_residuals.extend(rows);
            }
            TestKind::Histograms => files.extend(emit_histograms(&batch, &sm, cfg.tests.bins, dir)?),
            TestKind::GirsanovWeight => {
                if driftless {
                    reports.push(girsanov_weight_report(&batch)?);
                } else {
                    reports.push(not_applicable(kind, "only the driftless dynamics carry weights"));
                }
            }
        }
    }
    if !all_residuals.is_empty() {
        let p = dir.join("residuals.csv");
        write_residuals(&p, &all_residuals)?;
        files.push(p);
    }
    let p = dir.join("report.csv");
    write_report(&p, &reports)?;
    files.push(p);
    let p = dir.join("checks.csv");
    write_checks(&p, &reports)?;
    files.push(p);
    Ok((reports, diagnostics))
}

fn kind_name(kind: &TestKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn not_applicable(kind: &TestKind, why: &str) -> TestReport {
    TestReport {
        name: kind_name(kind),
        statistic: f64::NAN,
        threshold: f64::NAN,
        sample_size: 0.0,
        verdict: Verdict::Inconclusive,
        standard_error: None,
        checks: Vec::new(),
        notes: format!("not applicable: {why}"),
    }
}

fn path_flag_report<const D: usize>(batch: &TrajectoryBatch<D>) -> TestReport {
    let d = &batch.diagnostics;
    let flagged = d.boundary_overflow + d.reflect_failures + d.weight_overflow;
    TestReport {
        name: "path_flags".into(),
        statistic: flagged as f64,
        threshold: 0.0,
        sample_size: batch.records.len() as f64,
        verdict: if flagged == 0 { Verdict::Pass } else { Verdict::Fail },
        standard_error: None,
        checks: Vec::new(),
        notes: format!(
            "boundary overflow {}, reflection failures {}, weight overflow {}",
            d.boundary_overflow, d.reflect_failures, d.weight_overflow
        ),
    }
}

/// Mean final Girsanov weight within 3 SE of 1.
pub fn girsanov_weight_report<const D: usize>(batch: &TrajectoryBatch<D>) -> SimResult<TestReport> {
    let w: Vec<f64> = batch
        .ok_records()
        .filter_map(|r| r.log_weights.as_ref().and_then(|l| l.last()).map(|l| l.exp()))
        .collect();
    if w.is_empty() {
        return Err(inert_core::Error::EmptyBatch.into());
    }
    let (m, se) = mean_with_se(&w);
    let check = Check { label: "mean_weight".into(), estimate: m, expected: 1.0, standard_error: se, allowed_se: 3.0 };
    let pass = check.passed();
    Ok(TestReport {
        name: "girsanov_weight".into(),
        statistic: check.z().abs(),
        threshold: 3.0,
        sample_size: w.len() as f64,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        standard_error: Some(se),
        checks: vec![check],
        notes: String::new(),
    })
}

/// Residuals of the bump basis against `sm`.
pub fn residual_rows<const D: usize>(config_id: &str, sm: &StationaryMeasure<D>, tolerance: f64) -> SimResult<Vec<ResidualRow>> {
    bump_basis(sm.coefficients().domain())
        .iter()
        .enumerate()
        .map(|(i, f)| {
            Ok(ResidualRow {
                config_id: config_id.to_string(),
                f_id: format!("bump{}", i + 1),
                residual: stationarity_residual(sm, f)?.value,
                tolerance,
            })
        })
        .collect()
}

fn residual_report(rows: &[ResidualRow]) -> TestReport {
    let worst = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let tol = rows.first().map_or(0.0, |r| r.tolerance);
    TestReport {
        name: "residual".into(),
        statistic: worst,
        threshold: tol,
        sample_size: rows.len() as f64,
        verdict: if rows.iter().all(ResidualRow::pass) { Verdict::Pass } else { Verdict::Fail },
        standard_error: None,
        checks: Vec::new(),
        notes: format!("{} bump functions", rows.len()),
    }
}

/// Generator residuals only; `perturb` scales the potential in the
/// measure to check that the residuals respond.
pub fn residual(cfg: &RunConfig, dir: &Path, perturb: Option<f64>) -> SimResult<Outcome> {
    by_dimension!(cfg.dimension, residual_dim, cfg, dir, perturb)
}

fn residual_dim<const D: usize>(cfg: &RunConfig, dir: &Path, perturb: Option<f64>) -> SimResult<Outcome> {
    let setup = cfg.build::<D>()?;
    create_dir(dir)?;
    let mut sm = match &setup.potential {
        Some(p) => StationaryMeasure::gradient(&setup.cs, p)?,
        None => StationaryMeasure::reflected(&setup.cs)?,
    };
    let mut id = cfg.name.clone();
    if let Some(s) = perturb {
        sm = sm.perturbed(s)?;
        id = format!("{id}-perturbed-{s}");
    }
    let rows = residual_rows(&id, &sm, cfg.tests.residual_tolerance(D))?;
    let report = residual_report(&rows);
    let p = dir.join("residuals.csv");
    write_residuals(&p, &rows)?;
    let code = exit_code(std::slice::from_ref(&report), true);
    let m = manifest(
        cfg,
        "residual",
        "ok",
        json!({ "perturbation": perturb, "reports": report_summary(std::slice::from_ref(&report)), "exit_code": code, "files": ["residuals.csv", "manifest.json"] }),
    )?;
    write_json(&dir.join("manifest.json"), &m)?;
    Ok(Outcome { reports: vec![report], files: vec![p, dir.join("manifest.json")], exit_code: code })
}

pub fn sweep(cfg: &RunConfig, dir: &Path, n_list: &[u32], margin: f64, strict: bool) -> SimResult<Outcome> {
    by_dimension!(cfg.dimension, sweep_dim, cfg, dir, n_list, margin, strict)
}

fn sweep_dim<const D: usize>(cfg: &RunConfig, dir: &Path, n_list: &[u32], margin: f64, strict: bool) -> SimResult<Outcome> {
    let setup = cfg.build::<D>()?;
    create_dir(dir)?;
    let sweep_cfg = SweepConfig { n_list: n_list.to_vec(), sim: setup.sim.clone(), margin };
    let r = match weak_convergence_sweep(&Rayon, &setup.cs, &sweep_cfg) {
        Ok(r) => r,
        Err(e) => return finish_with_error(cfg, "sweep", dir, &[], e.into()),
    };
    let p = dir.join("sweep.csv");
    {
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["n", "distance", "mass"])?;
        for ((n, d), m) in r.n_list.iter().zip(&r.distances).zip(&r.masses) {
            w.write_record([n.to_string(), d.to_string(), m.to_string()])?;
        }
        w.flush().map_err(|e| SimError::io(&p, e))?;
    }
    let rp = dir.join("report.csv");
    write_report(&rp, std::slice::from_ref(&r.report))?;
    let code = exit_code(std::slice::from_ref(&r.report), strict);
    let m = manifest(
        cfg,
        "sweep",
        "ok",
        json!({
            "n_list": n_list,
            "margin": margin,
            "noise_floor": r.noise_floor,
            "reports": report_summary(std::slice::from_ref(&r.report)),
            "exit_code": code,
            "files": ["sweep.csv", "report.csv", "manifest.json"],
        }),
    )?;
    write_json(&dir.join("manifest.json"), &m)?;
    Ok(Outcome { reports: vec![r.report], files: vec![p, rp, dir.join("manifest.json")], exit_code: code })
}

/// Solves the Skorokhod problem in the configured domain for a path file.
pub fn skorokhod(cfg: &RunConfig, input: &Path, output: &Path) -> SimResult<()> {
    by_dimension!(cfg.dimension, skorokhod_dim, cfg, input, output)
}

fn skorokhod_dim<const D: usize>(cfg: &RunConfig, input: &Path, output: &Path) -> SimResult<()> {
    let domain = cfg.domain::<D>()?;
    let f = read_path::<D>(input)?;
    let sol = solve_skorokhod(&domain, &f)?;
    write_constrained(output, &sol)
}

/// Histograms of a trajectory file against the configured stationary law.
pub fn histogram(cfg: &RunConfig, trajectories: &Path, bins: usize, dir: &Path) -> SimResult<Vec<PathBuf>> {
    by_dimension!(cfg.dimension, histogram_dim, cfg, trajectories, bins, dir)
}

fn histogram_dim<const D: usize>(cfg: &RunConfig, trajectories: &Path, bins: usize, dir: &Path) -> SimResult<Vec<PathBuf>> {
    let setup = cfg.build::<D>()?;
    let rows = read_trajectories::<D>(trajectories)?;
    create_dir(dir)?;
    emit_histograms(&batch_from_rows(&rows), &setup.measure()?, bins, dir)
}
