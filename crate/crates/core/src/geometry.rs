//! Domains, their signed distance, inward normals and regularized distances.
//!
//! Signed distance is positive inside, zero on the boundary and negative
//! outside. It is exact for intervals, balls and boxes; ellipsoids and
//! general level-set domains use a damped Newton foot-point projection.

use alloc::format;
use alloc::sync::Arc;

use crate::error::{coords, Error, Result};
use crate::linalg::{Matrix, Point};
#[allow(unused_imports)]
use num_traits::Float;

/// Scalar level function `phi` describing `D = {phi > 0}`.
pub trait LevelFunction<const D: usize>: Send + Sync {
    fn value(&self, x: &Point<D>) -> f64;
    fn gradient(&self, x: &Point<D>) -> Point<D>;
    /// Hessian of `phi`; central differences of the gradient by default.
    fn hessian(&self, x: &Point<D>) -> Matrix<D> {
        let h = 1e-6 * (1.0 + x.amax());
        let mut m = Matrix::<D>::zeros();
        for j in 0..D {
            let mut e = Point::<D>::zeros();
            e[j] = h;
            let col = (self.gradient(&(x + e)) - self.gradient(&(x - e))) / (2.0 * h);
            m.set_column(j, &col);
        }
        (m + m.transpose()) * 0.5
    }
}

#[derive(Clone)]
enum Shape<const D: usize> {
    Interval { lower: f64, upper: f64 },
    Ball { center: Point<D>, radius: f64 },
    Box { lower: Point<D>, upper: Point<D> },
    Ellipsoid { center: Point<D>, radii: Point<D> },
    LevelSet(Arc<dyn LevelFunction<D>>),
}

/// Tag naming the geometric family of a [`Domain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Interval,
    Ball,
    Box,
    Ellipsoid,
    LevelSet,
}

/// A bounded open domain `D` in `R^D`. Immutable after construction.
#[derive(Clone)]
pub struct Domain<const D: usize> {
    shape: Shape<D>,
    lower: Point<D>,
    upper: Point<D>,
    diameter: f64,
    inradius: f64,
    tol_bd: f64,
}

impl<const D: usize> core::fmt::Debug for Domain<D> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Domain")
            .field("kind", &self.kind())
            .field("lower", &self.lower.as_slice())
            .field("upper", &self.upper.as_slice())
            .finish()
    }
}

const PROJECTION_MAX_ITERS: usize = 100;

impl<const D: usize> Domain<D> {
    fn finish(shape: Shape<D>, lower: Point<D>, upper: Point<D>, inradius: f64, diameter: f64) -> Self {
        Self { shape, lower, upper, diameter, inradius, tol_bd: 1e-9 * diameter }
    }

    /// Open interval `(lower, upper)`; only valid in one dimension.
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        if D != 1 {
            return Err(Error::InvalidDomain(format!("interval needs dimension 1, got {D}")));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidDomain(format!("interval bounds ({lower}, {upper})")));
        }
        Ok(Self::finish(
            Shape::Interval { lower, upper },
            Point::<D>::from_element(lower),
            Point::<D>::from_element(upper),
            0.5 * (upper - lower),
            upper - lower,
        ))
    }

    pub fn ball(center: Point<D>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) || !crate::linalg::all_finite(&center) {
            return Err(Error::InvalidDomain(format!("ball radius {radius}")));
        }
        let r = Point::<D>::from_element(radius);
        Ok(Self::finish(Shape::Ball { center, radius }, center - r, center + r, radius, 2.0 * radius))
    }

    /// Axis-aligned box. Lipschitz rather than C^2: normals on edges and
    /// corners are the normalized average of the adjacent face normals.
    pub fn cuboid(lower: Point<D>, upper: Point<D>) -> Result<Self> {
        if (0..D).any(|i| !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i])) {
            return Err(Error::InvalidDomain(format!(
                "box bounds {:?} .. {:?}",
                lower.as_slice(),
                upper.as_slice()
            )));
        }
        let half = (upper - lower) * 0.5;
        Ok(Self::finish(Shape::Box { lower, upper }, lower, upper, half.min(), (upper - lower).norm()))
    }

    /// Axis-aligned ellipsoid `sum ((x - c)_i / a_i)^2 < 1`.
    pub fn ellipsoid(center: Point<D>, radii: Point<D>) -> Result<Self> {
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || !crate::linalg::all_finite(&center) {
            return Err(Error::InvalidDomain(format!("ellipsoid radii {:?}", radii.as_slice())));
        }
        Ok(Self::finish(
            Shape::Ellipsoid { center, radii },
            center - radii,
            center + radii,
            radii.min(),
            2.0 * radii.max(),
        ))
    }

    /// `D = {phi > 0}` inside the given bounding box. `inradius` is a lower
    /// bound on the largest inscribed ball radius, used for step guards.
    pub fn level_set(
        phi: Arc<dyn LevelFunction<D>>,
        lower: Point<D>,
        upper: Point<D>,
        inradius: f64,
    ) -> Result<Self> {
        if (0..D).any(|i| !(lower[i] < upper[i])) || !(inradius > 0.0) {
            return Err(Error::InvalidDomain("level-set bounding box or inradius".into()));
        }
        let diameter = (upper - lower).norm();
        Ok(Self::finish(Shape::LevelSet(phi), lower, upper, inradius, diameter))
    }

    pub fn kind(&self) -> DomainKind {
        match self.shape {
            Shape::Interval { .. } => DomainKind::Interval,
            Shape::Ball { .. } => DomainKind::Ball,
            Shape::Box { .. } => DomainKind::Box,
            Shape::Ellipsoid { .. } => DomainKind::Ellipsoid,
            Shape::LevelSet(_) => DomainKind::LevelSet,
        }
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn inradius(&self) -> f64 {
        self.inradius
    }

    /// Boundary tolerance, `1e-9 * diameter`.
    pub fn tol_bd(&self) -> f64 {
        self.tol_bd
    }

    pub fn bounding_box(&self) -> (Point<D>, Point<D>) {
        (self.lower, self.upper)
    }

    pub fn centroid(&self) -> Point<D> {
        match &self.shape {
            Shape::Ball { center, .. } | Shape::Ellipsoid { center, .. } => *center,
            _ => (self.lower + self.upper) * 0.5,
        }
    }

    /// Lebesgue measure of the domain, when known in closed form.
    pub fn volume(&self) -> Option<f64> {
        let unit_ball = |d: usize| -> f64 {
            match d {
                1 => 2.0,
                2 => core::f64::consts::PI,
                3 => 4.0 / 3.0 * core::f64::consts::PI,
                _ => f64::NAN,
            }
        };
        match &self.shape {
            Shape::Interval { lower, upper } => Some(upper - lower),
            Shape::Box { lower, upper } => Some((upper - lower).product()),
            Shape::Ball { radius, .. } => Some(unit_ball(D) * radius.powi(D as i32)).filter(|v| v.is_finite()),
            Shape::Ellipsoid { radii, .. } => Some(unit_ball(D) * radii.product()).filter(|v| v.is_finite()),
            Shape::LevelSet(_) => None,
        }
    }

    /// Coordinates along `axis` where the regularized distance of this
    /// domain has a gradient discontinuity (medial planes of intervals and
    /// boxes). Quadrature rules use these as panel breakpoints.
    pub fn medial_breakpoints(&self, axis: usize) -> Option<f64> {
        match &self.shape {
            Shape::Interval { lower, upper } => Some(0.5 * (lower + upper)),
            Shape::Box { lower, upper } => Some(0.5 * (lower[axis] + upper[axis])),
            _ => None,
        }
    }

    pub fn signed_distance(&self, x: &Point<D>) -> Result<f64> {
        match &self.shape {
            Shape::Interval { lower, upper } => Ok((x[0] - lower).min(upper - x[0])),
            Shape::Ball { center, radius } => Ok(radius - (x - center).norm()),
            Shape::Box { lower, upper } => Ok(box_signed_distance(lower, upper, x)),
            Shape::Ellipsoid { .. } | Shape::LevelSet(_) => {
                let phi = self.level_value(x);
                let foot = self.level_foot(x)?;
                let d = (x - foot).norm();
                Ok(if phi >= 0.0 { d } else { -d })
            }
        }
    }

    /// Cheap containment test for the open domain.
    pub fn contains(&self, x: &Point<D>) -> bool {
        match &self.shape {
            Shape::Ellipsoid { .. } | Shape::LevelSet(_) => self.level_value(x) > 0.0,
            _ => self.signed_distance(x).map(|d| d > 0.0).unwrap_or(false),
        }
    }

    /// Containment in the closure, up to `tol_bd`.
    pub fn in_closure(&self, x: &Point<D>) -> bool {
        match &self.shape {
            Shape::Ellipsoid { .. } | Shape::LevelSet(_) => {
                if self.level_value(x) >= 0.0 {
                    return true;
                }
                self.signed_distance(x).map(|d| d >= -self.tol_bd).unwrap_or(false)
            }
            _ => self.signed_distance(x).map(|d| d >= -self.tol_bd).unwrap_or(false),
        }
    }

    /// Nearest point of the boundary to `x` (inside or outside).
    pub fn project_to_boundary(&self, x: &Point<D>) -> Result<Point<D>> {
        match &self.shape {
            Shape::Interval { lower, upper } => {
                let to_lower = (x[0] - lower).abs();
                let to_upper = (upper - x[0]).abs();
                let v = if to_lower <= to_upper { *lower } else { *upper };
                Ok(Point::<D>::from_element(v))
            }
            Shape::Ball { center, radius } => {
                let r = x - center;
                let n = r.norm();
                if n == 0.0 {
                    let mut e = Point::<D>::zeros();
                    e[0] = *radius;
                    return Ok(center + e);
                }
                Ok(center + r * (radius / n))
            }
            Shape::Box { lower, upper } => {
                if box_signed_distance(lower, upper, x) <= 0.0 {
                    return Ok(x.zip_zip_map(lower, upper, |v, l, u| v.clamp(l, u)));
                }
                let (axis, at_upper, _) = nearest_face(lower, upper, x);
                let mut p = *x;
                p[axis] = if at_upper { upper[axis] } else { lower[axis] };
                Ok(p)
            }
            Shape::Ellipsoid { .. } | Shape::LevelSet(_) => self.level_foot(x),
        }
    }

    /// Inward unit normal at a point within `tol_bd` of the boundary.
    pub fn inward_normal(&self, x_boundary: &Point<D>) -> Result<Point<D>> {
        let d = self.signed_distance(x_boundary)?;
        if d.abs() > self.tol_bd {
            return Err(Error::TooFarFromBoundary { distance: d.abs(), tol: self.tol_bd });
        }
        self.normal_near(x_boundary)
    }

    /// Inward normal at the boundary foot point of `x`; no distance check.
    pub(crate) fn normal_near(&self, x: &Point<D>) -> Result<Point<D>> {
        match &self.shape {
            Shape::Interval { lower, upper } => {
                let s = if (x[0] - lower).abs() <= (upper - x[0]).abs() { 1.0 } else { -1.0 };
                Ok(Point::<D>::from_element(s))
            }
            Shape::Ball { center, .. } => {
                let r = center - x;
                let n = r.norm();
                if n == 0.0 {
                    return Err(Error::InvalidArgument("normal requested at ball centre".into()));
                }
                Ok(r / n)
            }
            Shape::Box { lower, upper } => Ok(box_normal(lower, upper, x, self.tol_bd)),
            Shape::Ellipsoid { .. } | Shape::LevelSet(_) => {
                let foot = if self.level_value(x).abs() <= 1e-14 { *x } else { self.level_foot(x)? };
                let g = self.level_gradient(&foot);
                let n = g.norm();
                if n == 0.0 {
                    return Err(Error::ProjectionDiverged { point: coords(x), residual: f64::NAN });
                }
                Ok(g / n)
            }
        }
    }

    fn level_value(&self, x: &Point<D>) -> f64 {
        match &self.shape {
            Shape::Ellipsoid { center, radii } => {
                1.0 - (x - center).component_div(radii).norm_squared()
            }
            Shape::LevelSet(phi) => phi.value(x),
            _ => self.signed_distance(x).unwrap_or(f64::NAN),
        }
    }

    fn level_gradient(&self, x: &Point<D>) -> Point<D> {
        match &self.shape {
            Shape::Ellipsoid { center, radii } => {
                (x - center).zip_map(radii, |v, a| -2.0 * v / (a * a))
            }
            Shape::LevelSet(phi) => phi.gradient(x),
            _ => Point::<D>::zeros(),
        }
    }

    fn level_hessian(&self, x: &Point<D>) -> Matrix<D> {
        match &self.shape {
            Shape::Ellipsoid { radii, .. } => {
                Matrix::<D>::from_diagonal(&radii.map(|a| -2.0 / (a * a)))
            }
            Shape::LevelSet(phi) => phi.hessian(x),
            _ => Matrix::<D>::zeros(),
        }
    }

    /// Level-set value, gradient and Hessian; used by the regularized distance.
    pub(crate) fn level_jet(&self, x: &Point<D>) -> (f64, Point<D>, Matrix<D>) {
        (self.level_value(x), self.level_gradient(x), self.level_hessian(x))
    }

    /// Moves `p` onto `{phi = 0}` along the gradient (damped Newton).
    fn newton_to_surface(&self, p: &Point<D>) -> Result<Point<D>> {
        let mut q = *p;
        let tol = 1e-13 * self.diameter;
        for _ in 0..PROJECTION_MAX_ITERS {
            let phi = self.level_value(&q);
            let g = self.level_gradient(&q);
            let g2 = g.norm_squared();
            if g2 == 0.0 || !g2.is_finite() {
                break;
            }
            if phi.abs() / g2.sqrt() <= tol {
                return Ok(q);
            }
            let step = g * (phi / g2);
            let mut lambda = 1.0;
            loop {
                let cand = q - step * lambda;
                if self.level_value(&cand).abs() < phi.abs() || lambda < 1e-6 {
                    q = cand;
                    break;
                }
                lambda *= 0.5;
            }
        }
        let g = self.level_gradient(&q).norm();
        Err(Error::ProjectionDiverged { point: coords(p), residual: self.level_value(&q).abs() / g })
    }

    /// Closest point of `{phi = 0}` to `x`, by Newton on the Lagrange system
    /// `q + lambda grad phi(q) = x`, `phi(q) = 0`.
    fn level_foot(&self, x: &Point<D>) -> Result<Point<D>> {
        if let Shape::Ellipsoid { center, radii } = &self.shape {
            return Ok(ellipsoid_foot(center, radii, x));
        }
        let tol = 1e-12 * self.diameter;
        let mut q = self.newton_to_surface(x)?;
        let g0 = self.level_gradient(&q);
        let mut lambda = (x - q).dot(&g0) / g0.norm_squared();
        let residual = |q: &Point<D>, lambda: f64| -> (Point<D>, f64, f64) {
            let g = self.level_gradient(q);
            let f1 = q + g * lambda - x;
            let f2 = self.level_value(q);
            let gn = g.norm().max(f64::MIN_POSITIVE);
            (f1, f2, f1.norm() + f2.abs() / gn)
        };
        let (mut f1, mut f2, mut res) = residual(&q, lambda);
        for _ in 0..PROJECTION_MAX_ITERS {
            if res <= tol {
                return Ok(q);
            }
            let g = self.level_gradient(&q);
            let m = Matrix::<D>::identity() + self.level_hessian(&q) * lambda;
            let Some(inv) = m.try_inverse() else {
                break;
            };
            let a = inv * (-f1);
            let c = inv * g;
            let denom = g.dot(&c);
            if denom == 0.0 || !denom.is_finite() {
                break;
            }
            let dl = (g.dot(&a) + f2) / denom;
            let dq = a - c * dl;
            let mut t = 1.0;
            let mut improved = false;
            while t > 1e-8 {
                let qn = q + dq * t;
                let ln = lambda + dl * t;
                let (nf1, nf2, nres) = residual(&qn, ln);
                if nres < res {
                    q = qn;
                    lambda = ln;
                    f1 = nf1;
                    f2 = nf2;
                    res = nres;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if res <= self.tol_bd {
            return Ok(q);
        }
        Err(Error::ProjectionDiverged { point: coords(x), residual: res })
    }
}

/// Nearest boundary point of an axis-aligned ellipsoid. In the positive
/// orthant the foot is `q_i = r_i^2 a_i / (t + r_i^2)` with `t > -r_min^2`
/// the root of the decreasing `F(t) = sum (r_i a_i / (t + r_i^2))^2 - 1`.
fn ellipsoid_foot<const D: usize>(center: &Point<D>, radii: &Point<D>, x: &Point<D>) -> Point<D> {
    let y = x - center;
    let a = y.abs();
    let s = radii.component_mul(radii);
    let s_min = s.min();
    let tiny = 1e-300;
    let f = |t: f64| (0..D).map(|i| (radii[i] * a[i] / (t + s[i])).powi(2)).sum::<f64>() - 1.0;
    let on_min = |i: usize| s[i] == s_min;
    let mut q = Point::<D>::zeros();
    let degenerate = (0..D).all(|i| !on_min(i) || a[i] <= tiny * radii[i]);
    if degenerate {
        // The root may sit at -r_min^2; then the foot leaves the short axes.
        let mut used = 0.0;
        for i in (0..D).filter(|&i| !on_min(i)) {
            q[i] = s[i] * a[i] / (s[i] - s_min);
            used += (q[i] / radii[i]).powi(2);
        }
        if used < 1.0 {
            let m = (0..D).find(|&i| on_min(i)).unwrap_or(0);
            q[m] = radii[m] * (1.0 - used).sqrt();
            return center + q.component_mul(&y.map(|v| if v < 0.0 { -1.0 } else { 1.0 }));
        }
    }
    let mut lo = -s_min;
    let mut hi = radii.max() * a.norm() + tiny;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    for i in 0..D {
        q[i] = s[i] * a[i] / (t + s[i]);
    }
    center + q.component_mul(&y.map(|v| if v < 0.0 { -1.0 } else { 1.0 }))
}

fn box_signed_distance<const D: usize>(lower: &Point<D>, upper: &Point<D>, x: &Point<D>) -> f64 {
    let mut outside = 0.0;
    let mut inside = f64::INFINITY;
    for i in 0..D {
        let below = lower[i] - x[i];
        let above = x[i] - upper[i];
        let excess = below.max(above);
        if excess > 0.0 {
            outside += excess * excess;
        }
        inside = inside.min(-excess);
    }
    if outside > 0.0 {
        -outside.sqrt()
    } else {
        inside
    }
}

/// (axis, at_upper, distance) of the closest face to an interior point.
fn nearest_face<const D: usize>(lower: &Point<D>, upper: &Point<D>, x: &Point<D>) -> (usize, bool, f64) {
    let mut best = (0, false, f64::INFINITY);
    for i in 0..D {
        let dl = x[i] - lower[i];
        let du = upper[i] - x[i];
        if dl < best.2 {
            best = (i, false, dl);
        }
        if du < best.2 {
            best = (i, true, du);
        }
    }
    best
}

fn box_normal<const D: usize>(lower: &Point<D>, upper: &Point<D>, x: &Point<D>, tol: f64) -> Point<D> {
    let mut n = Point::<D>::zeros();
    let sd = box_signed_distance(lower, upper, x);
    let reference = sd.max(0.0);
    for i in 0..D {
        // Faces whose distance is within tol of the nearest one (inside) or
        // that are violated (outside) contribute their inward normal.
        let dl = x[i] - lower[i];
        let du = upper[i] - x[i];
        if dl <= reference + tol {
            n[i] += 1.0;
        }
        if du <= reference + tol {
            n[i] -= 1.0;
        }
    }
    let norm = n.norm();
    if norm == 0.0 {
        let (axis, at_upper, _) = nearest_face(lower, upper, x);
        n[axis] = if at_upper { -1.0 } else { 1.0 };
        return n;
    }
    n / norm
}

/// Construction used for the smooth interior distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizationKind {
    /// Exact distance; smooth away from the medial point of an interval.
    Exact,
    /// `r - s(|x - c|)` with `s` a C^2 even blend inside a centre cap of radius `cap`.
    BallCap { cap: f64 },
    /// Harmonic p-mean of face distances, `(sum d_f^-p)^(-1/p)`.
    SoftminFaces { sharpness: f64 },
    /// `phi / sqrt(|grad phi|^2 + (phi / l)^2)` with `l` the inradius.
    LevelRescaled { length: f64 },
}

/// A smooth function comparable to the distance to the complement:
/// `c1 * delta_D <= delta <= c2 * delta_D` on `D`.
#[derive(Clone, Debug)]
pub struct RegularizedDistance<const D: usize> {
    domain: Domain<D>,
    kind: RegularizationKind,
    c1: f64,
    c2: f64,
}

impl<const D: usize> RegularizedDistance<D> {
    /// Default construction for the domain's family.
    pub fn new(domain: &Domain<D>) -> Self {
        match domain.kind() {
            DomainKind::Interval => Self::with_kind(domain, RegularizationKind::Exact),
            DomainKind::Ball => Self::with_kind(domain, RegularizationKind::BallCap { cap: 0.1 * domain.inradius() }),
            DomainKind::Box => Self::with_kind(domain, RegularizationKind::SoftminFaces { sharpness: 8.0 }),
            DomainKind::Ellipsoid | DomainKind::LevelSet => {
                Self::with_kind(domain, RegularizationKind::LevelRescaled { length: domain.inradius() })
            }
        }
    }

    /// Uses the given construction. Sandwich constants are analytic for the
    /// exact, ball and box constructions and measured on a grid otherwise.
    pub fn with_kind(domain: &Domain<D>, kind: RegularizationKind) -> Self {
        let mut rd = Self { domain: domain.clone(), kind, c1: 1.0, c2: 1.0 };
        match kind {
            RegularizationKind::Exact => {}
            RegularizationKind::BallCap { cap } => {
                let r = domain.inradius();
                rd.c1 = 1.0 - 3.0 * cap / (8.0 * (r - cap));
            }
            RegularizationKind::SoftminFaces { sharpness } => {
                rd.c1 = (2.0 * D as f64).powf(-1.0 / sharpness);
            }
            RegularizationKind::LevelRescaled { .. } => {
                let (lo, hi) = rd.measure_sandwich(24);
                // Small safety factor: the scan grid can miss the extremes.
                rd.c1 = lo * 0.95;
                rd.c2 = hi * 1.05;
            }
        }
        rd
    }

    pub fn domain(&self) -> &Domain<D> {
        &self.domain
    }

    pub fn kind(&self) -> RegularizationKind {
        self.kind
    }

    /// Declared constants `(c1, c2)`.
    pub fn sandwich(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    pub fn value(&self, x: &Point<D>) -> Result<f64> {
        self.value_grad(x).map(|(v, _)| v)
    }

    /// `delta(x)` and its gradient for `x` in the closure of `D`.
    pub fn value_grad(&self, x: &Point<D>) -> Result<(f64, Point<D>)> {
        let dom = &self.domain;
        match (&dom.shape, self.kind) {
            (Shape::Interval { lower, upper }, RegularizationKind::Exact) => {
                let dl = x[0] - lower;
                let du = upper - x[0];
                if dl.min(du) < -dom.tol_bd {
                    return Err(Error::OutsideDomain { point: coords(x) });
                }
                Ok(if dl <= du {
                    (dl.max(0.0), Point::<D>::from_element(1.0))
                } else {
                    (du.max(0.0), Point::<D>::from_element(-1.0))
                })
            }
            (Shape::Ball { center, radius }, RegularizationKind::BallCap { cap }) => {
                let r = x - center;
                let rho = r.norm();
                if rho > radius + dom.tol_bd {
                    return Err(Error::OutsideDomain { point: coords(x) });
                }
                if rho >= cap {
                    return Ok(((radius - rho).max(0.0), -r / rho));
                }
                // s(rho) = cap * q(rho / cap), q(t) = 3/8 + 3/4 t^2 - 1/8 t^4;
                // s'(rho) / rho = (3/2 - t^2 / 2) / cap keeps the gradient smooth at 0.
                let t = rho / cap;
                let s = cap * (0.375 + 0.75 * t * t - 0.125 * t.powi(4));
                let ds_over_rho = (1.5 - 0.5 * t * t) / cap;
                Ok((radius - s, -r * ds_over_rho))
            }
            (Shape::Box { lower, upper }, RegularizationKind::SoftminFaces { sharpness }) => {
                if box_signed_distance(lower, upper, x) < -dom.tol_bd {
                    return Err(Error::OutsideDomain { point: coords(x) });
                }
                let p = sharpness;
                let mut m = f64::INFINITY;
                for i in 0..D {
                    m = m.min(x[i] - lower[i]).min(upper[i] - x[i]);
                }
                if m <= 0.0 {
                    let (axis, at_upper, _) = nearest_face(lower, upper, x);
                    let mut g = Point::<D>::zeros();
                    g[axis] = if at_upper { -1.0 } else { 1.0 };
                    return Ok((0.0, g));
                }
                let mut sum = 0.0;
                for i in 0..D {
                    sum += (m / (x[i] - lower[i])).powf(p) + (m / (upper[i] - x[i])).powf(p);
                }
                let delta = m * sum.powf(-1.0 / p);
                // d delta / d d_f = (delta / d_f)^(p + 1)
                let mut g = Point::<D>::zeros();
                for i in 0..D {
                    g[i] = (delta / (x[i] - lower[i])).powf(p + 1.0) - (delta / (upper[i] - x[i])).powf(p + 1.0);
                }
                Ok((delta, g))
            }
            (_, RegularizationKind::LevelRescaled { length }) => {
                let (phi, g, h) = dom.level_jet(x);
                if phi < 0.0 && !dom.in_closure(x) {
                    return Err(Error::OutsideDomain { point: coords(x) });
                }
                let phi = phi.max(0.0);
                let l2 = length * length;
                let n = (g.norm_squared() + phi * phi / l2).sqrt();
                let grad_n = (h * g + g * (phi / l2)) / n;
                let delta = phi / n;
                Ok((delta, g / n - grad_n * (phi / (n * n))))
            }
            _ => Err(Error::InvalidArgument("regularization kind does not match domain".into())),
        }
    }

    /// Scans a `per_axis^D` grid of interior points and returns the observed
    /// range of `delta / delta_D`.
    pub fn measure_sandwich(&self, per_axis: usize) -> (f64, f64) {
        let (lo, hi) = self.domain.bounding_box();
        let mut min_ratio = f64::INFINITY;
        let mut max_ratio: f64 = 0.0;
        let total = per_axis.pow(D as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut x = Point::<D>::zeros();
            for i in 0..D {
                let k = rem % per_axis;
                rem /= per_axis;
                x[i] = lo[i] + (hi[i] - lo[i]) * (k as f64 + 0.5) / per_axis as f64;
            }
            let Ok(dd) = self.domain.signed_distance(&x) else { continue };
            if dd <= 1e-6 * self.domain.diameter {
                continue;
            }
            let Ok((delta, _)) = self.value_grad(&x) else { continue };
            let ratio = delta / dd;
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
        }
        (min_ratio, max_ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p2(a: f64, b: f64) -> Point<2> {
        Point::<2>::new(a, b)
    }

    #[test]
    fn signed_distance_examples() {
        let ball = Domain::<2>::ball(p2(0.0, 0.0), 1.0).unwrap();
        assert_relative_eq!(ball.signed_distance(&p2(0.6, 0.0)).unwrap(), 0.4, epsilon = 1e-15);
        let iv = Domain::<1>::interval(0.0, 1.0).unwrap();
        assert_eq!(iv.signed_distance(&Point::<1>::new(0.25)).unwrap(), 0.25);
        let bx = Domain::<2>::cuboid(p2(0.0, 0.0), p2(1.0, 1.0)).unwrap();
        // Brute force: min over the four face distances.
        let x = p2(0.5, 0.9);
        let brute = [x[0], 1.0 - x[0], x[1], 1.0 - x[1]].into_iter().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(bx.signed_distance(&x).unwrap(), brute, epsilon = 1e-15);
        assert_relative_eq!(brute, 0.1, epsilon = 1e-15);
        assert_relative_eq!(bx.signed_distance(&p2(1.3, 1.4)).unwrap(), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn interval_needs_dimension_one() {
        assert!(Domain::<2>::interval(0.0, 1.0).is_err());
        assert!(Domain::<1>::interval(1.0, 0.0).is_err());
    }

    #[test]
    fn normal_examples() {
        let ball = Domain::<2>::ball(p2(0.0, 0.0), 1.0).unwrap();
        assert_relative_eq!(ball.inward_normal(&p2(1.0, 0.0)).unwrap(), p2(-1.0, 0.0));
        let iv = Domain::<1>::interval(0.0, 1.0).unwrap();
        assert_eq!(iv.inward_normal(&Point::<1>::new(0.0)).unwrap()[0], 1.0);
        assert_eq!(iv.inward_normal(&Point::<1>::new(1.0)).unwrap()[0], -1.0);
        let ell = Domain::<2>::ellipsoid(p2(0.0, 0.0), p2(2.0, 1.0)).unwrap();
        assert_relative_eq!(ell.inward_normal(&p2(2.0, 0.0)).unwrap(), p2(-1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn normal_far_from_boundary_is_an_error() {
        let ball = Domain::<2>::ball(p2(0.0, 0.0), 1.0).unwrap();
        assert!(matches!(ball.inward_normal(&p2(0.5, 0.0)), Err(Error::TooFarFromBoundary { .. })));
    }

    #[test]
    fn box_corner_normal_is_averaged() {
        let bx = Domain::<2>::cuboid(p2(0.0, 0.0), p2(1.0, 1.0)).unwrap();
        let n = bx.inward_normal(&p2(0.0, 0.0)).unwrap();
        let s = 0.5f64.sqrt();
        assert_relative_eq!(n, p2(s, s), epsilon = 1e-15);
        let n = bx.inward_normal(&p2(1.0, 0.5)).unwrap();
        assert_relative_eq!(n, p2(-1.0, 0.0));
    }

    #[test]
    fn ellipse_distance_matches_brute_force() {
        let ell = Domain::<2>::ellipsoid(p2(0.0, 0.0), p2(2.0, 1.0)).unwrap();
        let brute = |x: Point<2>| {
            let mut best = f64::INFINITY;
            let m = 200_000;
            for k in 0..m {
                let t = 2.0 * core::f64::consts::PI * k as f64 / m as f64;
                best = best.min((x - p2(2.0 * t.cos(), t.sin())).norm());
            }
            best
        };
        for x in [p2(1.8, 0.0), p2(0.0, 0.5), p2(1.0, 0.3), p2(2.5, 1.0), p2(-0.4, -0.9), p2(0.48, 0.066), p2(0.0, 0.0), p2(-1.0, 0.0)] {
            let sd = ell.signed_distance(&x).unwrap();
            let sign = if ell.contains(&x) { 1.0 } else { -1.0 };
            assert_relative_eq!(sd, sign * brute(x), epsilon = 1e-6);
        }
        assert_relative_eq!(ell.signed_distance(&p2(1.8, 0.0)).unwrap(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn projection_then_normal_is_idempotent() {
        let ell = Domain::<2>::ellipsoid(p2(0.5, -0.2), p2(1.5, 0.7)).unwrap();
        for x in [p2(0.9, 0.1), p2(-0.7, -0.3), p2(2.4, 0.8)] {
            let q = ell.project_to_boundary(&x).unwrap();
            let q2 = ell.project_to_boundary(&q).unwrap();
            assert!((q - q2).norm() <= ell.tol_bd());
            let n = ell.inward_normal(&q).unwrap();
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
            // Points into D.
            let eps = 1e-4;
            assert!(ell.signed_distance(&(q + n * eps)).unwrap() > ell.signed_distance(&q).unwrap());
        }
    }

    #[test]
    fn interval_regularized_distance_is_exact() {
        let iv = Domain::<1>::interval(0.0, 1.0).unwrap();
        let rd = RegularizedDistance::new(&iv);
        assert_eq!(rd.value(&Point::<1>::new(0.3)).unwrap(), 0.3);
        assert_eq!(rd.sandwich(), (1.0, 1.0));
        assert!(rd.value(&Point::<1>::new(-0.1)).is_err());
    }

    #[test]
    fn ball_cap_constants_hold_on_grid() {
        let ball = Domain::<2>::ball(p2(0.0, 0.0), 1.0).unwrap();
        let rd = RegularizedDistance::new(&ball);
        let (c1, c2) = rd.sandwich();
        let (lo, hi) = rd.measure_sandwich(100);
        assert!(lo >= c1 - 1e-12 && hi <= c2 + 1e-12, "{lo} {hi} vs {c1} {c2}");
        // Outside the cap the construction is the exact distance.
        let x = p2(0.5, 0.2);
        assert_relative_eq!(rd.value(&x).unwrap(), ball.signed_distance(&x).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn box_softmin_constants_hold_on_grid() {
        let bx = Domain::<2>::cuboid(p2(0.0, 0.0), p2(1.0, 2.0)).unwrap();
        let rd = RegularizedDistance::new(&bx);
        let (c1, c2) = rd.sandwich();
        let (lo, hi) = rd.measure_sandwich(100);
        assert!(lo >= c1 - 1e-12 && hi <= c2 + 1e-12, "{lo} {hi} vs {c1} {c2}");
    }

    fn fd_gradient<const D: usize>(rd: &RegularizedDistance<D>, x: &Point<D>, h: f64) -> Point<D> {
        Point::<D>::from_fn(|i, _| {
            let mut a = *x;
            let mut b = *x;
            a[i] += h;
            b[i] -= h;
            (rd.value(&a).unwrap() - rd.value(&b).unwrap()) / (2.0 * h)
        })
    }

    fn domains() -> [RegularizedDistance<2>; 3] {
        [
            RegularizedDistance::new(&Domain::<2>::ball(p2(0.2, -0.1), 1.5).unwrap()),
            RegularizedDistance::new(&Domain::<2>::cuboid(p2(0.0, 0.0), p2(1.0, 2.0)).unwrap()),
            RegularizedDistance::new(&Domain::<2>::ellipsoid(p2(0.0, 0.0), p2(2.0, 1.0)).unwrap()),
        ]
    }

    proptest::proptest! {
        #[test]
        fn gradient_matches_finite_differences(u in 0.0f64..1.0, v in 0.0f64..1.0, which in 0usize..3) {
            let rd = &domains()[which];
            let (lo, hi) = rd.domain().bounding_box();
            let x = p2(lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1]));
            let dd = rd.domain().signed_distance(&x).unwrap();
            proptest::prop_assume!(dd > 1e-2);
            let (_, g) = rd.value_grad(&x).unwrap();
            let fd = fd_gradient(rd, &x, 1e-5 * dd);
            proptest::prop_assert!((g - fd).norm() <= 1e-6 * g.norm().max(1e-3), "{:?} vs {:?}", g, fd);
        }

        #[test]
        fn regularized_distance_is_sandwiched(u in 0.0f64..1.0, v in 0.0f64..1.0, which in 0usize..3) {
            let rd = &domains()[which];
            let (lo, hi) = rd.domain().bounding_box();
            let x = p2(lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1]));
            let dd = rd.domain().signed_distance(&x).unwrap();
            proptest::prop_assume!(dd > 0.0);
            let (c1, c2) = rd.sandwich();
            let delta = rd.value(&x).unwrap();
            proptest::prop_assert!(delta >= c1 * dd * (1.0 - 1e-12) && delta <= c2 * dd * (1.0 + 1e-12), "{delta} {dd} {c1} {c2}");
        }
    }
}
