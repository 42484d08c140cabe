//! Deterministic Skorokhod problem on a domain: given a free path `f`, find
//! the constrained path `g` in the closure and a nondecreasing local time `l`
//! with `g = f + int n(g) dl`, `l` flat while `g` is inside `D`.
//!
//! The discrete scheme applies [`reflect_step`] to each linear segment of
//! the driving path. Per step the local-time increment is the smallest
//! `s >= 0` with `signed_distance(x + increment + s * push(xi)) >= 0`, the
//! push direction being evaluated at the landing point `xi`.

use alloc::vec::Vec;

use crate::error::{coords, Error, Result};
use crate::geometry::{Domain, DomainKind};
use crate::linalg::Point;

/// Fraction of the inradius a single increment may span.
pub const FEATURE_GUARD_FRACTION: f64 = 0.25;

const FIXED_POINT_ITERS: usize = 16;
const MAX_EXPANSIONS: usize = 80;
const MAX_ROOT_ITERS: usize = 200;

/// Result of one reflected increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectOutcome<const D: usize> {
    pub x_new: Point<D>,
    /// Local-time increment, zero iff `x + increment` was already in the closure.
    pub dl: f64,
    /// Boundary contact point used for the push direction.
    pub contact: Option<Point<D>>,
}

/// Largest increment accepted by [`reflect_step`] for this domain.
pub fn feature_guard<const D: usize>(domain: &Domain<D>) -> f64 {
    FEATURE_GUARD_FRACTION * domain.inradius()
}

/// One reflected increment from `x` in the closure of `domain`, pushing along
/// `push(xi)` at the contact point `xi`.
pub fn reflect_step<const D: usize, F>(
    domain: &Domain<D>,
    x: &Point<D>,
    increment: &Point<D>,
    push: F,
) -> Result<ReflectOutcome<D>>
where
    F: Fn(&Point<D>) -> Result<Point<D>>,
{
    let guard = feature_guard(domain);
    let size = increment.norm();
    if !(size <= guard) {
        return Err(Error::IncrementTooLarge { size, guard });
    }
    let y = x + increment;
    let sd_y = domain.signed_distance(&y)?;
    if sd_y >= 0.0 {
        return Ok(ReflectOutcome { x_new: y, dl: 0.0, contact: None });
    }

    if domain.kind() == DomainKind::Interval {
        let xi = domain.project_to_boundary(&y)?;
        let p = push(&xi)?;
        let n = domain.normal_near(&xi)?;
        let dot = p.dot(&n);
        if !(dot > 0.0) {
            return Err(Error::PushNotTransversal { point: coords(&xi), dot });
        }
        let dl = (xi[0] - y[0]) / p[0];
        return Ok(ReflectOutcome { x_new: xi, dl, contact: Some(xi) });
    }

    let tol = 1e-3 * domain.tol_bd();
    let mut xi = domain.project_to_boundary(&y)?;
    let mut p = push(&xi)?;
    let mut best = None;
    for _ in 0..FIXED_POINT_ITERS {
        let n = domain.normal_near(&xi)?;
        let dot = p.dot(&n);
        if !(dot > 0.0) {
            return Err(Error::PushNotTransversal { point: coords(&xi), dot });
        }
        let s = smallest_inside_step(domain, &y, &p, sd_y, -sd_y / dot, tol)?;
        let x_new = y + p * s;
        best = Some((x_new, s));
        let p_new = push(&x_new)?;
        if (p_new - p).norm() <= 1e-12 * p.norm() {
            break;
        }
        xi = x_new;
        p = p_new;
    }
    let (x_new, dl) = best.expect("at least one fixed-point iteration");
    Ok(ReflectOutcome { x_new, dl, contact: Some(x_new) })
}

/// Smallest `s > 0` (to tolerance) with `signed_distance(y + s p) >= 0`,
/// found by bracket expansion followed by Illinois false position. Always
/// returns the endpoint of the bracket that lies in the closure.
fn smallest_inside_step<const D: usize>(
    domain: &Domain<D>,
    y: &Point<D>,
    p: &Point<D>,
    g0: f64,
    guess: f64,
    tol: f64,
) -> Result<f64> {
    let g = |s: f64| domain.signed_distance(&(y + p * s));
    let mut lo = 0.0;
    let mut glo = g0;
    let mut hi = if guess.is_finite() && guess > 0.0 { guess } else { f64::EPSILON };
    let mut ghi = g(hi)?;
    let mut expansions = 0;
    while ghi < 0.0 {
        lo = hi;
        glo = ghi;
        // Grow geometrically; the extra relative nudge handles round-off
        // landings a few ulps outside.
        hi = hi * 2.0 + f64::EPSILON * hi.max(1.0);
        ghi = g(hi)?;
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::BracketFailure { point: coords(y), last: ghi });
        }
    }
    if ghi <= tol {
        return Ok(hi);
    }
    let (mut flo, mut fhi) = (glo, ghi);
    let mut side = 0i8;
    for _ in 0..MAX_ROOT_ITERS {
        let mut m = hi - fhi * (hi - lo) / (fhi - flo);
        if !(m > lo && m < hi) {
            m = 0.5 * (lo + hi);
        }
        let gm = g(m)?;
        if gm >= 0.0 {
            hi = m;
            fhi = gm;
            if gm <= tol {
                return Ok(hi);
            }
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        } else {
            lo = m;
            flo = gm;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(hi);
        }
    }
    Ok(hi)
}

/// Sampled free path, linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingPath<const D: usize> {
    times: Vec<f64>,
    values: Vec<Point<D>>,
}

impl<const D: usize> DrivingPath<D> {
    pub fn new(times: Vec<f64>, values: Vec<Point<D>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidArgument("path needs matching, nonempty times and values".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("path times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !crate::linalg::all_finite(v)) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("path has non-finite samples".into()));
        }
        Ok(Self { times, values })
    }

    /// Samples `f` on the uniform grid `t0 + i (t1 - t0) / steps`.
    pub fn from_fn(t0: f64, t1: f64, steps: usize, f: impl Fn(f64) -> Point<D>) -> Result<Self> {
        let times: Vec<f64> = (0..=steps).map(|i| t0 + (t1 - t0) * i as f64 / steps as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Point<D>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Constrained path and local time at the driving path's sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedPath<const D: usize> {
    pub times: Vec<f64>,
    pub g: Vec<Point<D>>,
    pub ell: Vec<f64>,
    /// Push direction used on each step (zero when `dl = 0`); entry `i` is
    /// the step ending at sample `i`, entry 0 is unused.
    pub push: Vec<Point<D>>,
}

impl<const D: usize> ConstrainedPath<D> {
    /// Largest deviation of `g(t_i)` from `f(t_i) + sum_j push_j dl_j`.
    pub fn reconstruction_error(&self, f: &DrivingPath<D>) -> f64 {
        let mut acc = Point::<D>::zeros();
        let mut worst: f64 = 0.0;
        for i in 0..self.g.len() {
            if i > 0 {
                acc += self.push[i] * (self.ell[i] - self.ell[i - 1]);
            }
            worst = worst.max((self.g[i] - (f.values()[i] + acc)).norm());
        }
        worst
    }

    /// Indices `i` where `l` increased on `[t_{i-1}, t_i]` although `g(t_i)`
    /// is farther than `tol` from the boundary.
    pub fn flat_off_boundary_violations(&self, domain: &Domain<D>, tol: f64) -> Vec<usize> {
        (1..self.g.len())
            .filter(|&i| {
                self.ell[i] > self.ell[i - 1]
                    && domain.signed_distance(&self.g[i]).map(|d| d.abs() > tol).unwrap_or(true)
            })
            .collect()
    }
}

/// Solves the Skorokhod problem with normal reflection for a sampled path.
pub fn solve_skorokhod<const D: usize>(domain: &Domain<D>, f: &DrivingPath<D>) -> Result<ConstrainedPath<D>> {
    let f0 = f.values()[0];
    if !domain.in_closure(&f0) {
        return Err(Error::OutsideDomain { point: coords(&f0) });
    }
    let n = f.len();
    let mut g = Vec::with_capacity(n);
    let mut ell = Vec::with_capacity(n);
    let mut push = Vec::with_capacity(n);
    g.push(f0);
    ell.push(0.0);
    push.push(Point::<D>::zeros());
    let normal = |xi: &Point<D>| domain.normal_near(xi);
    for i in 1..n {
        let inc = f.values()[i] - f.values()[i - 1];
        let prev = g[i - 1];
        let out = reflect_step(domain, &prev, &inc, normal)?;
        let dir = match out.contact {
            Some(c) => domain.normal_near(&c)?,
            None => Point::<D>::zeros(),
        };
        g.push(out.x_new);
        ell.push(ell[i - 1] + out.dl);
        push.push(dir);
    }
    Ok(ConstrainedPath { times: f.times().to_vec(), g, ell, push })
}
