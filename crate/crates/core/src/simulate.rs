//! Euler-Maruyama steppers for the reflected and gradient-potential systems
//! with inert drift, the Girsanov weight, and ensemble execution.
//!
//! Per-path randomness: path `i` uses `ChaCha8Rng::seed_from_u64(seed)`
//! switched to stream `i`, so results do not depend on execution order.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coefficients::{CoefficientSet, Potential};
use crate::error::{coords, Error, Result};
use crate::linalg::Point;
use crate::skorokhod::{feature_guard, reflect_step};
#[allow(unused_imports)]
use num_traits::Float;

/// `|log M|` above which the Girsanov weight is treated as overflowed.
pub const LOG_WEIGHT_LIMIT: f64 = 700.0;

const MAX_DRIFT_HALVINGS: u32 = 60;
const MAX_SUBSTEPS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState<const D: usize> {
    pub x: Point<D>,
    pub k: Point<D>,
    pub ell: f64,
    pub t: f64,
}

impl<const D: usize> SystemState<D> {
    pub fn new(x: Point<D>, k: Point<D>) -> Self {
        Self { x, k, ell: 0.0, t: 0.0 }
    }
}

/// Running `log M_t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GirsanovWeight {
    pub log_weight: f64,
}

impl GirsanovWeight {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Initial `(x, k)` for each path.
#[derive(Clone)]
pub enum InitialCondition<const D: usize> {
    Fixed { x: Point<D>, k: Point<D> },
    /// Domain centroid, `k = 0`.
    Centroid,
    /// One state per path, indexed by path id.
    PerPath(Arc<Vec<(Point<D>, Point<D>)>>),
}

impl<const D: usize> core::fmt::Debug for InitialCondition<D> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::Fixed { x, k } => write!(f, "Fixed {{ x: {:?}, k: {:?} }}", x.as_slice(), k.as_slice()),
            Self::Centroid => write!(f, "Centroid"),
            Self::PerPath(v) => write!(f, "PerPath({} states)", v.len()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig<const D: usize> {
    pub dt: f64,
    pub t_end: f64,
    pub burn_in: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Record a snapshot every `snapshot_stride` base steps after burn-in.
    pub snapshot_stride: usize,
    pub init: InitialCondition<D>,
    /// Drift-limited sub-stepping for the gradient family.
    pub adaptive: bool,
    /// Bound on `|drift| dt_sub`; `None` means `0.05 * inradius`.
    pub h_max: Option<f64>,
    /// Halvings allowed when a gradient sub-step leaves `D`.
    pub max_halvings: u32,
    /// Boundary treatment of the reflected steppers.
    pub boundary: BoundaryScheme,
}

/// How a reflected step treats an increment that leaves `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryScheme {
    /// Land on the boundary with `dl` the overshoot along the push.
    Projection,
    /// Mirror the overshoot back into `D` with `dl` twice the overshoot;
    /// falls back to projection when the mirror image leaves the closure.
    #[default]
    Mirror,
}

impl<const D: usize> SimConfig<D> {
    pub fn new(dt: f64, t_end: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            dt,
            t_end,
            burn_in: 0.2 * t_end,
            n_paths,
            seed,
            snapshot_stride: 1,
            init: InitialCondition::Centroid,
            adaptive: true,
            h_max: None,
            max_halvings: 40,
            boundary: BoundaryScheme::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive");
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.t_end) {
            return bad("burn_in must lie in [0, t_end)");
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1");
        }
        if let Some(h) = self.h_max {
            if !(h > 0.0) {
                return bad("h_max must be positive");
            }
        }
        if let InitialCondition::PerPath(v) = &self.init {
            if v.len() < self.n_paths {
                return bad("fewer initial states than paths");
            }
        }
        Ok(())
    }

    /// Number of base steps, `round(t_end / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// First base step at or after burn-in.
    pub fn burn_steps(&self) -> usize {
        (self.burn_in / self.dt - 1e-9).ceil() as usize
    }

    /// Snapshots recorded per path.
    pub fn snapshots_per_path(&self) -> usize {
        let (n, b) = (self.n_steps(), self.burn_steps());
        if b > n {
            0
        } else {
            (n - b) / self.snapshot_stride + 1
        }
    }

    fn initial_state(&self, cs: &CoefficientSet<D>, path_id: usize) -> SystemState<D> {
        match &self.init {
            InitialCondition::Fixed { x, k } => SystemState::new(*x, *k),
            InitialCondition::Centroid => SystemState::new(cs.domain().centroid(), Point::<D>::zeros()),
            InitialCondition::PerPath(v) => SystemState::new(v[path_id].0, v[path_id].1),
        }
    }
}

/// Which process an ensemble integrates.
#[derive(Clone)]
pub enum Dynamics<const D: usize> {
    /// Reflected diffusion with inert drift.
    Reflected,
    /// Gradient-potential diffusion with inert drift.
    Gradient(Potential<D>),
    /// Reflected diffusion without the `k dt` drift, carrying the local-time
    /// functional in `k` and the Girsanov weight towards the inert-drift law.
    DriftlessReflected,
}

impl<const D: usize> Dynamics<D> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Reflected => "reflected",
            Self::Gradient(_) => "gradient",
            Self::DriftlessReflected => "driftless_reflected",
        }
    }
}

/// Options for the gradient stepper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientOptions {
    pub adaptive: bool,
    pub h_max: f64,
    pub max_halvings: u32,
}

impl GradientOptions {
    pub fn for_domain<const D: usize>(cs: &CoefficientSet<D>) -> Self {
        Self { adaptive: true, h_max: 0.05 * cs.domain().inradius(), max_halvings: 40 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct StepStats {
    one_sided: bool,
    substeps: u64,
}

fn gaussian<const D: usize, R: Rng + ?Sized>(rng: &mut R) -> Point<D> {
    Point::<D>::from_fn(|_, _| rng.sample(StandardNormal))
}

/// One gradient-family step. The first sub-step uses `noise`; further
/// sub-steps draw fresh gaussians from `rng`.
pub fn step_gradient<const D: usize, R: Rng + ?Sized>(
    cs: &CoefficientSet<D>,
    p: &Potential<D>,
    s: &SystemState<D>,
    dt: f64,
    noise: &Point<D>,
    opts: &GradientOptions,
    rng: &mut R,
) -> Result<SystemState<D>> {
    gradient_inner(cs, p, s, dt, noise, opts, rng).map(|(s, _)| s)
}

fn gradient_inner<const D: usize, R: Rng + ?Sized>(
    cs: &CoefficientSet<D>,
    p: &Potential<D>,
    s: &SystemState<D>,
    dt: f64,
    noise: &Point<D>,
    opts: &GradientOptions,
    rng: &mut R,
) -> Result<(SystemState<D>, StepStats)> {
    let mut x = s.x;
    let mut k = s.k;
    let mut grad_v = p.gradient(&x)?;
    let mut remaining = dt;
    let mut dt_sub = dt;
    let mut first = true;
    let mut stats = StepStats::default();
    let half_gamma = cs.gamma().matrix() * 0.5;
    while remaining > 0.0 {
        let b = cs.drift_b(&x);
        stats.one_sided |= b.one_sided_stencil;
        let drift = b.value - cs.a(&x) * grad_v * 0.5 + k;
        let mut h = dt_sub.min(remaining);
        if opts.adaptive {
            let speed = drift.norm();
            let mut n = 0;
            while speed * h > opts.h_max && n < MAX_DRIFT_HALVINGS {
                h *= 0.5;
                n += 1;
            }
        }
        let xi = if first { *noise } else { gaussian::<D, R>(rng) };
        let mut halvings = 0;
        let (x_new, g_new) = loop {
            let trial = x + cs.diffuse(&x, &xi) * h.sqrt() + drift * h;
            if cs.domain().contains(&trial) {
                if let Ok(g) = p.gradient(&trial) {
                    break (trial, g);
                }
            }
            halvings += 1;
            if halvings > opts.max_halvings {
                return Err(Error::BoundaryOverflow { halvings: opts.max_halvings });
            }
            h *= 0.5;
        };
        k -= half_gamma * grad_v * h;
        x = x_new;
        grad_v = g_new;
        remaining -= h;
        if remaining <= 1e-15 * dt {
            remaining = 0.0;
        }
        dt_sub = (2.0 * h).min(dt);
        first = false;
        stats.substeps += 1;
        if stats.substeps > MAX_SUBSTEPS {
            return Err(Error::BoundaryOverflow { halvings: opts.max_halvings });
        }
    }
    Ok((SystemState { x, k, ell: s.ell, t: s.t + dt }, stats))
}

/// One reflected step with inert drift: free increment
/// `sigma sqrt(dt) noise + (b + k) dt`, projected along the conormal, then
/// `ell += dl`, `k += v(xi) dl`.
pub fn step_reflected<const D: usize>(
    cs: &CoefficientSet<D>,
    s: &SystemState<D>,
    dt: f64,
    noise: &Point<D>,
) -> Result<SystemState<D>> {
    reflected_inner(cs, s, dt, noise, true, BoundaryScheme::Projection).map(|(s, _)| s)
}

/// Reflected step without the `k dt` drift; `k` still accumulates `v dl`.
pub fn step_driftless<const D: usize>(
    cs: &CoefficientSet<D>,
    s: &SystemState<D>,
    dt: f64,
    noise: &Point<D>,
) -> Result<SystemState<D>> {
    reflected_inner(cs, s, dt, noise, false, BoundaryScheme::Projection).map(|(s, _)| s)
}

fn reflected_inner<const D: usize>(
    cs: &CoefficientSet<D>,
    s: &SystemState<D>,
    dt: f64,
    noise: &Point<D>,
    with_k: bool,
    scheme: BoundaryScheme,
) -> Result<(SystemState<D>, StepStats)> {
    let b = cs.drift_b(&s.x);
    let mut drift = b.value;
    if with_k {
        drift += s.k;
    }
    let inc = cs.diffuse(&s.x, noise) * dt.sqrt() + drift * dt;
    let mut out = reflect_increment_with(cs, s, &inc, scheme)?;
    out.t = s.t + dt;
    Ok((out, StepStats { one_sided: b.one_sided_stencil, substeps: 1 }))
}

/// Applies a free increment with projection and the inert-drift update.
/// An increment beyond the feature guard is applied in equal pieces.
pub fn reflect_increment<const D: usize>(
    cs: &CoefficientSet<D>,
    s: &SystemState<D>,
    inc: &Point<D>,
) -> Result<SystemState<D>> {
    reflect_increment_with(cs, s, inc, BoundaryScheme::Projection)
}

pub fn reflect_increment_with<const D: usize>(
    cs: &CoefficientSet<D>,
    s: &SystemState<D>,
    inc: &Point<D>,
    scheme: BoundaryScheme,
) -> Result<SystemState<D>> {
    let domain = cs.domain();
    let guard = feature_guard(domain);
    let size = inc.norm();
    if !size.is_finite() {
        return Err(Error::IncrementTooLarge { size, guard });
    }
    let pieces = if size <= guard { 1 } else { (size / guard).ceil() as usize };
    let piece = inc / pieces as f64;
    let push = |xi: &Point<D>| cs.push_at(xi).map(|(u, _)| u);
    let mut out = *s;
    for _ in 0..pieces {
        let r = reflect_step(domain, &out.x, &piece, push)?;
        let mut x_new = r.x_new;
        if let Some(xi) = r.contact {
            let (u, n) = cs.push_at(&xi)?;
            let mut dl = r.dl;
            if scheme == BoundaryScheme::Mirror {
                let mirrored = r.x_new + u * r.dl;
                if domain.in_closure(&mirrored) {
                    x_new = mirrored;
                    dl *= 2.0;
                }
            }
            out.k += cs.inert_v(&xi, &n, &u) * dl;
            out.ell += dl;
        }
        out.x = x_new;
    }
    Ok(out)
}

/// `log M += theta . dB - |theta|^2 dt / 2` with `theta = sigma^{-1}(x) k` at
/// the left endpoint.
pub fn girsanov_weight_step<const D: usize>(
    cs: &CoefficientSet<D>,
    s: &SystemState<D>,
    w: &GirsanovWeight,
    d_b: &Point<D>,
    dt: f64,
) -> Result<GirsanovWeight> {
    let theta = cs.sigma_inv(&s.x) * s.k;
    let log_weight = w.log_weight + theta.dot(d_b) - 0.5 * theta.norm_squared() * dt;
    if !(log_weight.abs() <= LOG_WEIGHT_LIMIT) {
        return Err(Error::WeightOverflow { log_weight });
    }
    Ok(GirsanovWeight { log_weight })
}

/// Why a path stopped early.
#[derive(Debug, Clone, PartialEq)]
pub enum PathFlag {
    Ok,
    BoundaryOverflow,
    ReflectFailure(String),
    WeightOverflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord<const D: usize> {
    pub path_id: usize,
    pub snapshots: Vec<SystemState<D>>,
    /// Girsanov log-weight at each snapshot (driftless dynamics only).
    pub log_weights: Option<Vec<f64>>,
    pub flag: PathFlag,
    /// Largest `|k|` over `t <= t_end / 2`.
    pub max_k_first_half: f64,
    /// Largest `|k|` over the whole run.
    pub max_k: f64,
    pub one_sided_stencils: u64,
    pub substeps: u64,
    pub steps_completed: usize,
}

/// Counts aggregated over an ensemble.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchDiagnostics {
    pub boundary_overflow: usize,
    pub reflect_failures: usize,
    pub weight_overflow: usize,
    pub one_sided_stencils: u64,
    pub substeps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch<const D: usize> {
    pub records: Vec<PathRecord<D>>,
    pub diagnostics: BatchDiagnostics,
}

impl<const D: usize> TrajectoryBatch<D> {
    pub fn from_records(records: Vec<PathRecord<D>>) -> Self {
        let mut d = BatchDiagnostics::default();
        for r in &records {
            match r.flag {
                PathFlag::Ok => {}
                PathFlag::BoundaryOverflow => d.boundary_overflow += 1,
                PathFlag::ReflectFailure(_) => d.reflect_failures += 1,
                PathFlag::WeightOverflow => d.weight_overflow += 1,
            }
            d.one_sided_stencils += r.one_sided_stencils;
            d.substeps += r.substeps;
        }
        Self { records, diagnostics: d }
    }

    /// Wraps independent `(x, k)` samples as a single path of snapshots.
    pub fn from_samples(samples: &[(Point<D>, Point<D>)]) -> Self {
        let snapshots: Vec<_> = samples
            .iter()
            .enumerate()
            .map(|(i, (x, k))| SystemState { x: *x, k: *k, ell: 0.0, t: i as f64 })
            .collect();
        let max_k = snapshots.iter().map(|s| s.k.norm()).fold(0.0, f64::max);
        Self::from_records(alloc::vec![PathRecord {
            path_id: 0,
            steps_completed: snapshots.len(),
            snapshots,
            log_weights: None,
            flag: PathFlag::Ok,
            max_k_first_half: max_k,
            max_k,
            one_sided_stencils: 0,
            substeps: 0,
        }])
    }

    /// Records that finished without a flag.
    pub fn ok_records(&self) -> impl Iterator<Item = &PathRecord<D>> {
        self.records.iter().filter(|r| r.flag == PathFlag::Ok)
    }

    /// Snapshots of unflagged paths, path-major.
    pub fn snapshots(&self) -> impl Iterator<Item = &SystemState<D>> {
        self.ok_records().flat_map(|r| r.snapshots.iter())
    }

    pub fn len(&self) -> usize {
        self.snapshots().count()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots().next().is_none()
    }

    pub fn x_coordinate(&self, axis: usize) -> Vec<f64> {
        self.snapshots().map(|s| s.x[axis]).collect()
    }

    pub fn k_coordinate(&self, axis: usize) -> Vec<f64> {
        self.snapshots().map(|s| s.k[axis]).collect()
    }

    /// Final states of unflagged paths.
    pub fn finals(&self) -> Vec<SystemState<D>> {
        self.ok_records().filter_map(|r| r.snapshots.last().copied()).collect()
    }

    /// Largest `|k|` over all paths, first half and whole horizon.
    pub fn max_k(&self) -> (f64, f64) {
        self.records.iter().fold((0.0f64, 0.0f64), |(a, b), r| (a.max(r.max_k_first_half), b.max(r.max_k)))
    }
}

/// Integrates one path.
pub fn run_path<const D: usize>(
    cs: &CoefficientSet<D>,
    dynamics: &Dynamics<D>,
    cfg: &SimConfig<D>,
    path_id: usize,
) -> PathRecord<D> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path_id as u64);
    let n_steps = cfg.n_steps();
    let burn = cfg.burn_steps();
    let half = n_steps / 2;
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let opts = GradientOptions {
        adaptive: cfg.adaptive,
        h_max: cfg.h_max.unwrap_or(0.05 * cs.domain().inradius()),
        max_halvings: cfg.max_halvings,
    };
    let weighted = matches!(dynamics, Dynamics::DriftlessReflected);

    let mut s = cfg.initial_state(cs, path_id);
    let mut w = GirsanovWeight::default();
    let mut rec = PathRecord {
        path_id,
        snapshots: Vec::with_capacity(cfg.snapshots_per_path()),
        log_weights: weighted.then(Vec::new),
        flag: PathFlag::Ok,
        max_k_first_half: s.k.norm(),
        max_k: s.k.norm(),
        one_sided_stencils: 0,
        substeps: 0,
        steps_completed: 0,
    };
    let record = |rec: &mut PathRecord<D>, s: &SystemState<D>, w: &GirsanovWeight| {
        rec.snapshots.push(*s);
        if let Some(lw) = rec.log_weights.as_mut() {
            lw.push(w.log_weight);
        }
    };
    if burn == 0 {
        record(&mut rec, &s, &w);
    }
    for i in 1..=n_steps {
        let noise = gaussian::<D, _>(&mut rng);
        let step = match dynamics {
            Dynamics::Reflected => reflected_inner(cs, &s, dt, &noise, true, cfg.boundary),
            Dynamics::Gradient(p) => gradient_inner(cs, p, &s, dt, &noise, &opts, &mut rng),
            Dynamics::DriftlessReflected => {
                match girsanov_weight_step(cs, &s, &w, &(noise * sqrt_dt), dt) {
                    Ok(nw) => w = nw,
                    Err(_) => {
                        rec.flag = PathFlag::WeightOverflow;
                        break;
                    }
                }
                reflected_inner(cs, &s, dt, &noise, false, cfg.boundary)
            }
        };
        match step {
            Ok((mut next, stats)) => {
                next.t = i as f64 * dt;
                s = next;
                rec.one_sided_stencils += stats.one_sided as u64;
                rec.substeps += stats.substeps;
            }
            Err(Error::BoundaryOverflow { .. }) | Err(Error::PotentialOverflow { .. }) => {
                rec.flag = PathFlag::BoundaryOverflow;
                break;
            }
            Err(e) => {
                rec.flag = PathFlag::ReflectFailure(e.to_string());
                break;
            }
        }
        rec.steps_completed = i;
        let kn = s.k.norm();
        rec.max_k = rec.max_k.max(kn);
        if i <= half {
            rec.max_k_first_half = rec.max_k_first_half.max(kn);
        }
        if i >= burn && (i - burn) % cfg.snapshot_stride == 0 {
            record(&mut rec, &s, &w);
        }
    }
    rec
}

/// Runs independent path jobs and returns their results in path order.
pub trait EnsembleExecutor {
    fn map_paths<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs paths one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl EnsembleExecutor for Sequential {
    fn map_paths<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(job).collect()
    }
}

pub fn run_ensemble<const D: usize>(
    cs: &CoefficientSet<D>,
    dynamics: &Dynamics<D>,
    cfg: &SimConfig<D>,
) -> Result<TrajectoryBatch<D>> {
    run_ensemble_with(&Sequential, cs, dynamics, cfg)
}

pub fn run_ensemble_with<const D: usize, E: EnsembleExecutor>(
    exec: &E,
    cs: &CoefficientSet<D>,
    dynamics: &Dynamics<D>,
    cfg: &SimConfig<D>,
) -> Result<TrajectoryBatch<D>> {
    cfg.validate()?;
    check_initial_states(cs, dynamics, cfg)?;
    let records = exec.map_paths(cfg.n_paths, |i| run_path(cs, dynamics, cfg, i));
    Ok(TrajectoryBatch::from_records(records))
}

fn check_initial_states<const D: usize>(
    cs: &CoefficientSet<D>,
    dynamics: &Dynamics<D>,
    cfg: &SimConfig<D>,
) -> Result<()> {
    let check = |x: &Point<D>| -> Result<()> {
        let ok = match dynamics {
            Dynamics::Gradient(p) => cs.domain().contains(x) && p.gradient(x).is_ok(),
            _ => cs.domain().in_closure(x),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::OutsideDomain { point: coords(x) })
        }
    };
    match &cfg.init {
        InitialCondition::Fixed { x, .. } => check(x),
        InitialCondition::Centroid => check(&cs.domain().centroid()),
        InitialCondition::PerPath(v) => v.iter().take(cfg.n_paths).try_for_each(|(x, _)| check(x)),
    }
}
