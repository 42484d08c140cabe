//! Closed-form stationary measure `c_x rho(x) e^{-V(x)} dx  c_y e^{-(Gamma^{-1} y, y)} dy`,
//! the generator of `(X, K)`, the quadrature residual of `int G f dpi`, and
//! an exact sampler.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coefficients::{CoefficientSet, Potential};
use crate::error::{coords, Error, Result};
use crate::geometry::{Domain, DomainKind, RegularizationKind};
use crate::linalg::{Matrix, Point};
use crate::quadrature::{sum, KahanSum, Rule1D};
#[allow(unused_imports)]
use num_traits::Float;

/// Nodes of tabulated marginal CDFs.
pub const MARGINAL_NODES: usize = 513;

/// Half-width of the whitened `y` box used for gaussian quadrature.
const Y_BOX: f64 = 9.0;

/// Quadrature resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub panels: usize,
    pub order: usize,
    /// Angular nodes for polar rules on discs and ellipses.
    pub angular: usize,
    /// Monte Carlo points for `d >= 3`.
    pub mc_points: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { panels: 16, order: 16, angular: 256, mc_points: 200_000 }
    }
}

impl Resolution {
    pub fn refined(&self) -> Self {
        Self {
            panels: 2 * self.panels,
            order: self.order,
            angular: 2 * self.angular,
            mc_points: 4 * self.mc_points,
        }
    }
}

/// Points and weights integrating over `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct XRule<const D: usize> {
    pub points: Vec<Point<D>>,
    pub weights: Vec<f64>,
    pub monte_carlo: bool,
}

impl<const D: usize> XRule<D> {
    pub fn integrate(&self, f: impl Fn(&Point<D>) -> f64) -> f64 {
        let mut s = KahanSum::default();
        for (p, w) in self.points.iter().zip(&self.weights) {
            s.add(w * f(p));
        }
        s.value()
    }
}

/// Tensor product of a 1D rule, as `(point, weight)` pairs.
fn tensor<const D: usize>(rules: &[Rule1D; D]) -> (Vec<Point<D>>, Vec<f64>) {
    let total: usize = rules.iter().map(|r| r.len()).product();
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = [0usize; D];
    for _ in 0..total {
        let mut p = Point::<D>::zeros();
        let mut w = 1.0;
        for a in 0..D {
            p[a] = rules[a].nodes[idx[a]];
            w *= rules[a].weights[idx[a]];
        }
        points.push(p);
        weights.push(w);
        for a in 0..D {
            idx[a] += 1;
            if idx[a] < rules[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
    (points, weights)
}

fn box_rules<const D: usize>(
    domain: &Domain<D>,
    lo: &Point<D>,
    hi: &Point<D>,
    panels: usize,
    order: usize,
) -> [Rule1D; D] {
    core::array::from_fn(|a| {
        let breaks: Vec<f64> = domain.medial_breakpoints(a).into_iter().collect();
        Rule1D::composite(lo[a], hi[a], &breaks, panels, order)
    })
}

/// Quadrature over `D`: composite Gauss-Legendre for intervals and boxes,
/// polar rules for discs and ellipses, an indicator tensor rule for level
/// sets (all `d <= 2`), antithetic Monte Carlo for `d >= 3`. `radial_break`
/// is a relative radius where the integrand may lose smoothness.
pub fn x_rule<const D: usize>(domain: &Domain<D>, radial_break: Option<f64>, res: &Resolution) -> XRule<D> {
    let (lo, hi) = domain.bounding_box();
    if D <= 2 {
        match domain.kind() {
            DomainKind::Interval | DomainKind::Box => {
                let (points, weights) = tensor(&box_rules(domain, &lo, &hi, res.panels, res.order));
                return XRule { points, weights, monte_carlo: false };
            }
            DomainKind::Ball | DomainKind::Ellipsoid if D == 2 => {
                let c = (lo + hi) * 0.5;
                let radii = (hi - lo) * 0.5;
                let breaks: Vec<f64> = radial_break.into_iter().collect();
                let rr = Rule1D::composite(0.0, 1.0, &breaks, res.panels, res.order);
                let th = Rule1D::periodic(0.0, TAU, res.angular);
                let mut points = Vec::with_capacity(rr.len() * th.len());
                let mut weights = Vec::with_capacity(rr.len() * th.len());
                for (r, wr) in rr.nodes.iter().zip(&rr.weights) {
                    for (t, wt) in th.nodes.iter().zip(&th.weights) {
                        let mut p = c;
                        p[0] += radii[0] * r * t.cos();
                        p[1] += radii[1] * r * t.sin();
                        points.push(p);
                        weights.push(wr * wt * r * radii[0] * radii[1]);
                    }
                }
                return XRule { points, weights, monte_carlo: false };
            }
            _ => {
                let (pts, ws) = tensor(&box_rules(domain, &lo, &hi, res.panels, res.order));
                let (points, weights) = pts.into_iter().zip(ws).filter(|(p, _)| domain.contains(p)).unzip();
                return XRule { points, weights, monte_carlo: false };
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let half = res.mc_points / 2;
    let vol: f64 = (hi - lo).product();
    let w = vol / (2 * half) as f64;
    let mut points = Vec::with_capacity(2 * half);
    let mut weights = Vec::with_capacity(2 * half);
    for _ in 0..half {
        let u = Point::<D>::from_fn(|_, _| rng.random::<f64>());
        let p = lo + (hi - lo).component_mul(&u);
        let q = lo + hi - p;
        for z in [p, q] {
            if domain.contains(&z) {
                points.push(z);
                weights.push(w);
            }
        }
    }
    XRule { points, weights, monte_carlo: true }
}

fn radial_break_of<const D: usize>(p: Option<&Potential<D>>) -> Option<f64> {
    match p {
        Some(Potential::RegularizedVn { rd, .. }) => match rd.kind() {
            RegularizationKind::BallCap { cap } => Some(cap / rd.domain().inradius()),
            _ => None,
        },
        _ => None,
    }
}

/// `int_D e^{-V} dx` by quadrature.
pub fn potential_mass<const D: usize>(p: &Potential<D>, res: &Resolution) -> f64 {
    let rule = x_rule(p.domain(), radial_break_of(Some(p)), res);
    rule.integrate(|x| p.weight(x))
}

/// Tabulated one-dimensional marginal of the `x` law.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCdf {
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
    pub pdf: Vec<f64>,
    /// Total mass before renormalization; `1` up to quadrature error.
    pub raw_mass: f64,
}

impl MarginalCdf {
    fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let n = self.grid.len();
        if t <= self.grid[0] || t >= self.grid[n - 1] {
            return None;
        }
        let h = (self.grid[n - 1] - self.grid[0]) / (n - 1) as f64;
        let i = (((t - self.grid[0]) / h) as usize).min(n - 2);
        Some((i, (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i])))
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self.locate(t) {
            Some((i, s)) => self.cdf[i] + s * (self.cdf[i + 1] - self.cdf[i]),
            None if t <= self.grid[0] => 0.0,
            None => 1.0,
        }
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match self.locate(t) {
            Some((i, s)) => self.pdf[i] + s * (self.pdf[i + 1] - self.pdf[i]),
            None => 0.0,
        }
    }
}

/// The product stationary measure.
#[derive(Clone)]
pub struct StationaryMeasure<const D: usize> {
    cs: CoefficientSet<D>,
    potential: Option<Potential<D>>,
    scale: f64,
    res: Resolution,
    rule: XRule<D>,
    c_x: f64,
    c_y: f64,
}

impl<const D: usize> core::fmt::Debug for StationaryMeasure<D> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("StationaryMeasure")
            .field("gradient", &self.potential.is_some())
            .field("scale", &self.scale)
            .field("c_x", &self.c_x)
            .field("c_y", &self.c_y)
            .finish()
    }
}

impl<const D: usize> StationaryMeasure<D> {
    /// Reflected family: `x`-density proportional to `rho`.
    pub fn reflected(cs: &CoefficientSet<D>) -> Result<Self> {
        Self::build(cs.clone(), None, 1.0, Resolution::default())
    }

    /// Gradient family: `x`-density proportional to `rho e^{-V}`.
    pub fn gradient(cs: &CoefficientSet<D>, p: &Potential<D>) -> Result<Self> {
        Self::build(cs.clone(), Some(p.clone()), 1.0, Resolution::default())
    }

    pub fn with_resolution(self, res: Resolution) -> Result<Self> {
        Self::build(self.cs, self.potential, self.scale, res)
    }

    /// Same generator, `x`-density `rho e^{-scale V}`. Used to check that the
    /// residual test detects a wrong measure.
    pub fn perturbed(&self, scale: f64) -> Result<Self> {
        Self::build(self.cs.clone(), self.potential.clone(), scale, self.res)
    }

    fn build(cs: CoefficientSet<D>, potential: Option<Potential<D>>, scale: f64, res: Resolution) -> Result<Self> {
        let rule = x_rule(cs.domain(), radial_break_of(potential.as_ref()), &res);
        let mut sm = Self { cs, potential, scale, res, rule, c_x: 1.0, c_y: 1.0 };
        let mass = sm.rule.integrate(|x| sm.x_weight(x));
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidCoefficients("x-density has no mass".into()));
        }
        sm.c_x = 1.0 / mass;
        sm.c_y = 1.0 / sm.y_mass(&res);
        Ok(sm)
    }

    /// `int e^{-(Gamma^{-1} y, y)} dy` in whitened coordinates `y = L z`.
    fn y_mass(&self, res: &Resolution) -> f64 {
        let det_l: f64 = self.cs.gamma().cholesky_factor().diagonal().product();
        let (points, weights) = self.z_tensor(res);
        det_l * sum(points.iter().zip(&weights).map(|(z, w)| w * (-z.norm_squared()).exp()))
    }

    fn z_tensor(&self, res: &Resolution) -> (Vec<Point<D>>, Vec<f64>) {
        let panels = if D >= 3 { 4 } else { res.panels.max(4) / 2 };
        let r = Rule1D::composite(-Y_BOX, Y_BOX, &[], panels, res.order);
        tensor(&core::array::from_fn(|_| r.clone()))
    }

    pub fn coefficients(&self) -> &CoefficientSet<D> {
        &self.cs
    }

    pub fn potential(&self) -> Option<&Potential<D>> {
        self.potential.as_ref()
    }

    pub fn resolution(&self) -> Resolution {
        self.res
    }

    pub fn x_rule(&self) -> &XRule<D> {
        &self.rule
    }

    pub fn c_x(&self) -> f64 {
        self.c_x
    }

    pub fn c_y(&self) -> f64 {
        self.c_y
    }

    /// Unnormalized `x`-density; zero outside `D`.
    pub fn x_weight(&self, x: &Point<D>) -> f64 {
        if !self.cs.domain().contains(x) {
            return 0.0;
        }
        let rho = self.cs.rho(x);
        match &self.potential {
            None => rho,
            Some(p) => rho * (-self.scale * p.value(x)).exp(),
        }
    }

    pub fn x_density(&self, x: &Point<D>) -> f64 {
        self.c_x * self.x_weight(x)
    }

    pub fn y_density(&self, y: &Point<D>) -> f64 {
        self.c_y * (-self.cs.gamma().inverse_quadratic(y)).exp()
    }

    pub fn density(&self, x: &Point<D>, y: &Point<D>) -> f64 {
        self.x_density(x) * self.y_density(y)
    }

    /// Covariance of the `y` factor, `Gamma / 2`.
    pub fn y_covariance(&self) -> Matrix<D> {
        self.cs.gamma().stationary_covariance()
    }

    /// `int y y^T c_y e^{-(Gamma^{-1} y, y)} dy` by quadrature.
    pub fn y_second_moments(&self) -> Matrix<D> {
        let l = *self.cs.gamma().cholesky_factor();
        let det_l: f64 = l.diagonal().product();
        let (points, weights) = self.z_tensor(&self.res);
        let mut acc = [[KahanSum::default(); D]; D];
        for (z, w) in points.iter().zip(&weights) {
            let y = l * z;
            let m = w * det_l * self.c_y * (-z.norm_squared()).exp();
            for i in 0..D {
                for j in 0..D {
                    acc[i][j].add(m * y[i] * y[j]);
                }
            }
        }
        Matrix::<D>::from_fn(|i, j| acc[i][j].value())
    }

    /// `int x c_x rho e^{-V} dx`.
    pub fn x_mean(&self) -> Point<D> {
        Point::<D>::from_fn(|a, _| self.c_x * self.rule.integrate(|x| x[a] * self.x_weight(x)))
    }

    /// `int c_x rho e^{-V} dx` with a rule twice as fine; `1` up to quadrature error.
    pub fn refined_mass(&self) -> f64 {
        let rule = x_rule(self.cs.domain(), radial_break_of(self.potential.as_ref()), &self.res.refined());
        self.c_x * rule.integrate(|x| self.x_weight(x))
    }

    /// `int c_y e^{-(Gamma^{-1} y, y)} dy` with a finer rule.
    pub fn refined_y_mass(&self) -> f64 {
        self.c_y * self.y_mass(&self.res.refined())
    }

    /// Marginal law of coordinate `axis` of `x`, tabulated on
    /// [`MARGINAL_NODES`] equally spaced nodes across the bounding box.
    pub fn x_marginal(&self, axis: usize) -> Result<MarginalCdf> {
        if axis >= D {
            return Err(Error::InvalidArgument("marginal axis out of range".into()));
        }
        let (lo, hi) = self.cs.domain().bounding_box();
        let n = MARGINAL_NODES;
        let grid: Vec<f64> = (0..n).map(|i| lo[axis] + (hi[axis] - lo[axis]) * i as f64 / (n - 1) as f64).collect();
        let (pdf, cdf) = if D >= 3 { self.mc_marginal(axis, &grid) } else { self.slice_marginal(axis, &grid) };
        let raw_mass = *cdf.last().unwrap_or(&0.0);
        if !(raw_mass > 0.0) {
            return Err(Error::InvalidCoefficients("marginal has no mass".into()));
        }
        Ok(MarginalCdf {
            grid,
            cdf: cdf.iter().map(|c| c / raw_mass).collect(),
            pdf: pdf.iter().map(|p| p / raw_mass).collect(),
            raw_mass,
        })
    }

    /// Density of `x_axis` at `s`: a line integral across `D` for `d = 2`.
    fn slice_density(&self, axis: usize, s: f64, line: &Rule1D) -> f64 {
        if D == 1 {
            let mut x = Point::<D>::zeros();
            x[0] = s;
            return self.x_density(&x);
        }
        let other = 1 - axis;
        let (lo, hi) = self.cs.domain().bounding_box();
        let Some((a, b)) = chord(self.cs.domain(), axis, s, lo[other], hi[other]) else {
            return 0.0;
        };
        let mut x = Point::<D>::zeros();
        x[axis] = s;
        let mut acc = KahanSum::default();
        for (t, w) in line.nodes.iter().zip(&line.weights) {
            x[other] = a + (b - a) * t;
            acc.add(w * (b - a) * self.x_density(&x));
        }
        acc.value()
    }

    fn slice_marginal(&self, axis: usize, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let line = Rule1D::composite(0.0, 1.0, &[0.5], 2, 16);
        let (gx, gw) = crate::quadrature::gauss_legendre(8);
        let pdf: Vec<f64> = grid.iter().map(|&s| self.slice_density(axis, s, &line)).collect();
        let mut cdf = alloc::vec![0.0; grid.len()];
        for i in 1..grid.len() {
            let (a, b) = (grid[i - 1], grid[i]);
            let seg = sum(gx.iter().zip(&gw).map(|(t, w)| {
                0.5 * (b - a) * w * self.slice_density(axis, a + 0.5 * (b - a) * (t + 1.0), &line)
            }));
            cdf[i] = cdf[i - 1] + seg;
        }
        (pdf, cdf)
    }

    fn mc_marginal(&self, axis: usize, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = grid.len();
        let h = grid[1] - grid[0];
        let mut bins = alloc::vec![0.0; n - 1];
        for (p, w) in self.rule.points.iter().zip(&self.rule.weights) {
            let i = (((p[axis] - grid[0]) / h) as usize).min(n - 2);
            bins[i] += w * self.x_density(p);
        }
        let mut cdf = alloc::vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + bins[i - 1];
        }
        let pdf = (0..n)
            .map(|i| {
                let l = if i > 0 { bins[i - 1] } else { bins[0] };
                let r = if i < n - 1 { bins[i] } else { bins[n - 2] };
                0.5 * (l + r) / h
            })
            .collect();
        (pdf, cdf)
    }
}

/// Interval `[a, b]` of the line `x_axis = s` (other coordinate ranging over
/// `[lo, hi]`) inside a two-dimensional domain, by scan and bisection.
fn chord<const D: usize>(domain: &Domain<D>, axis: usize, s: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let other = 1 - axis;
    let at = |t: f64| {
        let mut x = Point::<D>::zeros();
        x[axis] = s;
        x[other] = t;
        domain.contains(&x)
    };
    let m = 256;
    let ts: Vec<f64> = (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect();
    let first = ts.iter().position(|&t| at(t))?;
    let last = ts.iter().rposition(|&t| at(t))?;
    let refine = |mut inside: f64, mut outside: f64| {
        for _ in 0..80 {
            let mid = 0.5 * (inside + outside);
            if at(mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        0.5 * (inside + outside)
    };
    let a = if first == 0 { lo } else { refine(ts[first], ts[first - 1]) };
    let b = if last == m { hi } else { refine(ts[last], ts[last + 1]) };
    Some((a, b))
}

/// Axis-aligned support of a test function in `x` and `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportBox<const D: usize> {
    pub x_lo: Point<D>,
    pub x_hi: Point<D>,
    pub y_lo: Point<D>,
    pub y_hi: Point<D>,
}

/// A `C^2` function of `(x, y)` with derivative callbacks.
pub trait TestFunction<const D: usize>: Send + Sync {
    fn value(&self, x: &Point<D>, y: &Point<D>) -> f64;
    fn grad_x(&self, x: &Point<D>, y: &Point<D>) -> Point<D>;
    fn grad_y(&self, x: &Point<D>, y: &Point<D>) -> Point<D>;
    fn hessian_x(&self, _x: &Point<D>, _y: &Point<D>) -> Option<Matrix<D>> {
        None
    }
    /// Compact support, if any.
    fn support(&self) -> Option<SupportBox<D>> {
        None
    }
}

/// `f = c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantFunction(pub f64);

impl<const D: usize> TestFunction<D> for ConstantFunction {
    fn value(&self, _: &Point<D>, _: &Point<D>) -> f64 {
        self.0
    }
    fn grad_x(&self, _: &Point<D>, _: &Point<D>) -> Point<D> {
        Point::<D>::zeros()
    }
    fn grad_y(&self, _: &Point<D>, _: &Point<D>) -> Point<D> {
        Point::<D>::zeros()
    }
    fn hessian_x(&self, _: &Point<D>, _: &Point<D>) -> Option<Matrix<D>> {
        Some(Matrix::<D>::zeros())
    }
}

/// A single coordinate, `x_i` or `y_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coordinate {
    X(usize),
    Y(usize),
}

impl<const D: usize> TestFunction<D> for Coordinate {
    fn value(&self, x: &Point<D>, y: &Point<D>) -> f64 {
        match *self {
            Self::X(i) => x[i],
            Self::Y(i) => y[i],
        }
    }
    fn grad_x(&self, _: &Point<D>, _: &Point<D>) -> Point<D> {
        let mut g = Point::<D>::zeros();
        if let Self::X(i) = *self {
            g[i] = 1.0;
        }
        g
    }
    fn grad_y(&self, _: &Point<D>, _: &Point<D>) -> Point<D> {
        let mut g = Point::<D>::zeros();
        if let Self::Y(i) = *self {
            g[i] = 1.0;
        }
        g
    }
    fn hessian_x(&self, _: &Point<D>, _: &Point<D>) -> Option<Matrix<D>> {
        Some(Matrix::<D>::zeros())
    }
}

/// Product of bumps `(1 - s^2)^3` over all `x` and `y` coordinates, with
/// `s = (coordinate - center) / half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpProduct<const D: usize> {
    pub x_center: Point<D>,
    pub x_half: Point<D>,
    pub y_center: Point<D>,
    pub y_half: Point<D>,
}

/// `(beta, beta', beta'')` of `(1 - s^2)^3`, zero outside `|s| < 1`.
fn bump(s: f64) -> (f64, f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let u = 1.0 - s * s;
    (u * u * u, -6.0 * s * u * u, -6.0 * u * u + 24.0 * s * s * u)
}

impl<const D: usize> BumpProduct<D> {
    pub fn new(x_center: Point<D>, x_half: Point<D>, y_center: Point<D>, y_half: Point<D>) -> Self {
        Self { x_center, x_half, y_center, y_half }
    }

    /// Per-coordinate `(beta, beta'/h, beta''/h^2)` for `x` then `y`.
    fn factors(&self, x: &Point<D>, y: &Point<D>) -> ([(f64, f64, f64); D], [(f64, f64, f64); D]) {
        let fx = core::array::from_fn(|i| {
            let h = self.x_half[i];
            let (b, d1, d2) = bump((x[i] - self.x_center[i]) / h);
            (b, d1 / h, d2 / (h * h))
        });
        let fy = core::array::from_fn(|i| {
            let h = self.y_half[i];
            let (b, d1, d2) = bump((y[i] - self.y_center[i]) / h);
            (b, d1 / h, d2 / (h * h))
        });
        (fx, fy)
    }
}

fn product_except<const D: usize>(f: &[(f64, f64, f64); D], skip: &[usize]) -> f64 {
    (0..D).filter(|i| !skip.contains(i)).map(|i| f[i].0).product()
}

impl<const D: usize> TestFunction<D> for BumpProduct<D> {
    fn value(&self, x: &Point<D>, y: &Point<D>) -> f64 {
        let (fx, fy) = self.factors(x, y);
        product_except(&fx, &[]) * product_except(&fy, &[])
    }

    fn grad_x(&self, x: &Point<D>, y: &Point<D>) -> Point<D> {
        let (fx, fy) = self.factors(x, y);
        let py = product_except(&fy, &[]);
        Point::<D>::from_fn(|i, _| fx[i].1 * product_except(&fx, &[i]) * py)
    }

    fn grad_y(&self, x: &Point<D>, y: &Point<D>) -> Point<D> {
        let (fx, fy) = self.factors(x, y);
        let px = product_except(&fx, &[]);
        Point::<D>::from_fn(|i, _| fy[i].1 * product_except(&fy, &[i]) * px)
    }

    fn hessian_x(&self, x: &Point<D>, y: &Point<D>) -> Option<Matrix<D>> {
        let (fx, fy) = self.factors(x, y);
        let py = product_except(&fy, &[]);
        Some(Matrix::<D>::from_fn(|i, j| {
            if i == j {
                fx[i].2 * product_except(&fx, &[i]) * py
            } else {
                fx[i].1 * fx[j].1 * product_except(&fx, &[i, j]) * py
            }
        }))
    }

    fn support(&self) -> Option<SupportBox<D>> {
        Some(SupportBox {
            x_lo: self.x_center - self.x_half,
            x_hi: self.x_center + self.x_half,
            y_lo: self.y_center - self.y_half,
            y_hi: self.y_center + self.y_half,
        })
    }
}

/// Five bump products with varied `x` supports around the centroid (scaled
/// by the inradius) and `y` windows off-centre from the origin.
pub fn bump_basis<const D: usize>(domain: &Domain<D>) -> Vec<BumpProduct<D>> {
    let c = domain.centroid();
    let r = domain.inradius();
    let root = (D as f64).sqrt();
    let axis = |i: usize, v: f64| {
        let mut e = Point::<D>::zeros();
        e[i] = v;
        e
    };
    let alt = Point::<D>::from_fn(|i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    let spec: [(Point<D>, f64, f64, f64); 5] = [
        (Point::<D>::zeros(), 0.3, 0.3, 1.0),
        (axis(0, 0.4 * r), 0.25, -0.5, 1.2),
        (Point::<D>::from_element(-0.45 * r / root), 0.2, 0.8, 1.5),
        (axis(D - 1, 0.3 * r), 0.35, -0.2, 0.8),
        (alt * (0.5 * r / root), 0.15, 0.5, 1.0),
    ];
    spec.iter()
        .map(|(o, h, yc, yh)| {
            BumpProduct::new(
                c + o,
                Point::<D>::from_element(h * r),
                Point::<D>::from_element(*yc),
                Point::<D>::from_element(*yh),
            )
        })
        .collect()
}

/// Coefficients of `G` frozen at one `x`.
struct FrozenX<const D: usize> {
    a: Matrix<D>,
    drift: Point<D>,
    k_drift: Point<D>,
}

fn freeze<const D: usize>(cs: &CoefficientSet<D>, p: Option<&Potential<D>>, x: &Point<D>) -> Result<FrozenX<D>> {
    let a = cs.a(x);
    let b = cs.drift_b(x).value;
    let gv = match p {
        Some(p) => p.gradient(x)?,
        None => Point::<D>::zeros(),
    };
    Ok(FrozenX { a, drift: b - a * gv * 0.5, k_drift: cs.gamma().matrix() * gv * -0.5 })
}

fn apply_frozen<const D: usize>(c: &FrozenX<D>, f: &dyn TestFunction<D>, x: &Point<D>, y: &Point<D>) -> Result<f64> {
    let h = f.hessian_x(x, y).ok_or(Error::MissingHessian)?;
    let gx = f.grad_x(x, y);
    let gy = f.grad_y(x, y);
    Ok(0.5 * c.a.component_mul(&h).sum() + (c.drift + y).dot(&gx) + c.k_drift.dot(&gy))
}

/// `G f(x, y) = (1/2) tr(A D_x^2 f) + (b - A grad V / 2) . grad_x f + y . grad_x f
/// - (Gamma grad V / 2) . grad_y f`; with no potential `V = 0`.
pub fn generator_apply<const D: usize>(
    cs: &CoefficientSet<D>,
    p: Option<&Potential<D>>,
    f: &dyn TestFunction<D>,
    x: &Point<D>,
    y: &Point<D>,
) -> Result<f64> {
    if !cs.domain().contains(x) {
        return Err(Error::OutsideDomain { point: coords(x) });
    }
    apply_frozen(&freeze(cs, p, x)?, f, x, y)
}

/// `int G f dpi`, with a standard error when computed by Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub standard_error: Option<f64>,
    pub nodes: usize,
}

/// Residual resolution: tensor Gauss-Legendre panels and order per axis on
/// the support box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualGrid {
    pub panels: usize,
    pub order: usize,
    pub mc_points: usize,
}

impl ResidualGrid {
    pub fn for_dimension(d: usize) -> Self {
        match d {
            1 => Self { panels: 20, order: 20, mc_points: 0 },
            2 => Self { panels: 4, order: 10, mc_points: 0 },
            _ => Self { panels: 0, order: 0, mc_points: 400_000 },
        }
    }
}

/// `int G f dpi` where `G` uses the measure's potential and `pi` is the
/// measure's density. Requires `f`'s `x` support strictly inside `D`;
/// without a declared support the integral runs over all of `D x R^d`.
pub fn stationarity_residual<const D: usize>(sm: &StationaryMeasure<D>, f: &dyn TestFunction<D>) -> Result<Residual> {
    stationarity_residual_on(sm, f, &ResidualGrid::for_dimension(D))
}

pub fn stationarity_residual_on<const D: usize>(
    sm: &StationaryMeasure<D>,
    f: &dyn TestFunction<D>,
    grid: &ResidualGrid,
) -> Result<Residual> {
    let cs = sm.coefficients();
    let p = sm.potential();
    let Some(sup) = f.support() else {
        return full_residual(sm, f);
    };
    check_support_inside(cs.domain(), &sup)?;
    if D >= 3 {
        return mc_residual(sm, f, &sup, grid.mc_points);
    }
    let xr: [Rule1D; D] = core::array::from_fn(|a| {
        let breaks: Vec<f64> = cs.domain().medial_breakpoints(a).into_iter().collect();
        Rule1D::composite(sup.x_lo[a], sup.x_hi[a], &breaks, grid.panels, grid.order)
    });
    let yr: [Rule1D; D] = core::array::from_fn(|a| Rule1D::composite(sup.y_lo[a], sup.y_hi[a], &[], grid.panels, grid.order));
    let (xp, xw) = tensor(&xr);
    let (yp, yw) = tensor(&yr);
    let yd: Vec<f64> = yp.iter().zip(&yw).map(|(y, w)| w * sm.y_density(y)).collect();
    let mut acc = KahanSum::default();
    for (x, wx) in xp.iter().zip(&xw) {
        let dx = wx * sm.x_density(x);
        if dx == 0.0 {
            continue;
        }
        let frozen = freeze(cs, p, x)?;
        let mut inner = KahanSum::default();
        for (y, wy) in yp.iter().zip(&yd) {
            inner.add(wy * apply_frozen(&frozen, f, x, y)?);
        }
        acc.add(dx * inner.value());
    }
    Ok(Residual { value: acc.value(), standard_error: None, nodes: xp.len() * yp.len() })
}

fn check_support_inside<const D: usize>(domain: &Domain<D>, sup: &SupportBox<D>) -> Result<()> {
    let m = 8usize;
    let total = (m + 1).pow(D as u32);
    for idx in 0..total {
        let mut rem = idx;
        let x = Point::<D>::from_fn(|a, _| {
            let i = rem % (m + 1);
            rem /= m + 1;
            sup.x_lo[a] + (sup.x_hi[a] - sup.x_lo[a]) * i as f64 / m as f64
        });
        if !matches!(domain.signed_distance(&x), Ok(d) if d > 0.0) {
            return Err(Error::SupportNotInside);
        }
    }
    Ok(())
}

fn full_residual<const D: usize>(sm: &StationaryMeasure<D>, f: &dyn TestFunction<D>) -> Result<Residual> {
    let cs = sm.coefficients();
    let l = *cs.gamma().cholesky_factor();
    let (zp, zw) = sm.z_tensor(&Resolution { panels: 4, order: 12, ..sm.res });
    let det_l: f64 = l.diagonal().product();
    let ys: Vec<(Point<D>, f64)> = zp
        .iter()
        .zip(&zw)
        .map(|(z, w)| (l * z, w * det_l * sm.c_y * (-z.norm_squared()).exp()))
        .collect();
    let mut acc = KahanSum::default();
    let rule = sm.x_rule();
    for (x, wx) in rule.points.iter().zip(&rule.weights) {
        let dx = wx * sm.x_density(x);
        if dx == 0.0 {
            continue;
        }
        let frozen = freeze(cs, sm.potential(), x)?;
        for (y, wy) in &ys {
            acc.add(dx * wy * apply_frozen(&frozen, f, x, y)?);
        }
    }
    Ok(Residual { value: acc.value(), standard_error: None, nodes: rule.points.len() * ys.len() })
}

fn mc_residual<const D: usize>(
    sm: &StationaryMeasure<D>,
    f: &dyn TestFunction<D>,
    sup: &SupportBox<D>,
    n: usize,
) -> Result<Residual> {
    let cs = sm.coefficients();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let vol = (sup.x_hi - sup.x_lo).product() * (sup.y_hi - sup.y_lo).product();
    let half = (n / 2).max(1);
    let mut s = KahanSum::default();
    let mut s2 = KahanSum::default();
    for _ in 0..half {
        let ux = Point::<D>::from_fn(|_, _| rng.random::<f64>());
        let uy = Point::<D>::from_fn(|_, _| rng.random::<f64>());
        let mut pair = 0.0;
        for flip in [false, true] {
            let (ux, uy) = if flip { (ux.map(|u| 1.0 - u), uy.map(|u| 1.0 - u)) } else { (ux, uy) };
            let x = sup.x_lo + (sup.x_hi - sup.x_lo).component_mul(&ux);
            let y = sup.y_lo + (sup.y_hi - sup.y_lo).component_mul(&uy);
            let g = generator_apply(cs, sm.potential(), f, &x, &y)?;
            pair += 0.5 * vol * g * sm.density(&x, &y);
        }
        s.add(pair);
        s2.add(pair * pair);
    }
    let m = half as f64;
    let mean = s.value() / m;
    let var = (s2.value() / m - mean * mean).max(0.0);
    Ok(Residual { value: mean, standard_error: Some((var / m).sqrt()), nodes: 2 * half })
}

/// `n` independent draws `(x, y)` from the measure: `x` by rejection from
/// the bounding box, `y = L z / sqrt(2)` with `z` standard normal.
pub fn sample_stationary<const D: usize>(
    sm: &StationaryMeasure<D>,
    n: usize,
    seed: u64,
) -> Result<Vec<(Point<D>, Point<D>)>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = sm.coefficients().domain().bounding_box();
    let envelope = 1.05 * rejection_envelope(sm);
    let factor = sm.coefficients().gamma().stationary_factor();
    let mut out = Vec::with_capacity(n);
    let mut tries: u64 = 0;
    while out.len() < n {
        tries += 1;
        let u = Point::<D>::from_fn(|_, _| rng.random::<f64>());
        let x = lo + (hi - lo).component_mul(&u);
        let w = sm.x_weight(&x);
        if rng.random::<f64>() * envelope < w {
            let z = Point::<D>::from_fn(|_, _| rng.sample(StandardNormal));
            out.push((x, factor * z));
        }
        if tries % 100_000 == 0 {
            let rate = out.len() as f64 / tries as f64;
            if rate < 1e-4 {
                return Err(Error::AcceptanceTooLow { rate });
            }
        }
    }
    Ok(out)
}

fn rejection_envelope<const D: usize>(sm: &StationaryMeasure<D>) -> f64 {
    let (lo, hi) = sm.coefficients().domain().bounding_box();
    let m: usize = match D {
        1 => 4096,
        2 => 128,
        _ => 24,
    };
    let mut best: f64 = sm.x_rule().points.iter().map(|p| sm.x_weight(p)).fold(0.0, f64::max);
    let total = (m + 1).pow(D as u32);
    for idx in 0..total {
        let mut rem = idx;
        let x = Point::<D>::from_fn(|a, _| {
            let i = rem % (m + 1);
            rem /= m + 1;
            lo[a] + (hi[a] - lo[a]) * i as f64 / m as f64
        });
        best = best.max(sm.x_weight(&x));
    }
    best
}

/// `int e^{-(Gamma^{-1} y, y)} dy = pi^{d/2} sqrt(det Gamma)`.
pub fn gaussian_mass<const D: usize>(gamma: &crate::coefficients::Gamma<D>) -> f64 {
    PI.powf(D as f64 / 2.0) * gamma.cholesky_factor().diagonal().product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Density, Gamma};
    use crate::geometry::RegularizedDistance;
    use approx::assert_relative_eq;

    fn interval_cs() -> CoefficientSet<1> {
        CoefficientSet::new(Domain::interval(0.0, 1.0).unwrap(), Gamma::identity())
    }

    fn disc_cs(g: Matrix<2>) -> CoefficientSet<2> {
        CoefficientSet::new(Domain::ball(Point::<2>::zeros(), 1.0).unwrap(), Gamma::new(g).unwrap())
    }

    fn p1(v: f64) -> Point<1> {
        Point::<1>::new(v)
    }

    #[test]
    fn normalizers_match_closed_forms() {
        let sm = StationaryMeasure::reflected(&interval_cs()).unwrap();
        assert_relative_eq!(sm.c_x(), 1.0, epsilon = 1e-13);
        assert_relative_eq!(sm.c_y(), 1.0 / PI.sqrt(), epsilon = 1e-13);
        let g = Matrix::<2>::new(2.0, 0.4, 0.4, 1.0);
        let sm = StationaryMeasure::reflected(&disc_cs(g)).unwrap();
        assert_relative_eq!(sm.c_x(), 1.0 / PI, epsilon = 1e-12);
        assert_relative_eq!(sm.c_y(), 1.0 / gaussian_mass(&Gamma::new(g).unwrap()), epsilon = 1e-12);
        assert_relative_eq!(gaussian_mass(&Gamma::new(g).unwrap()), PI * (2.0f64 - 0.16).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn marginals_integrate_to_one_on_finer_rules() {
        let cs = interval_cs();
        let p = Potential::regularized(2, RegularizedDistance::new(cs.domain())).unwrap();
        let sm = StationaryMeasure::gradient(&cs, &p).unwrap();
        assert_relative_eq!(sm.refined_mass(), 1.0, epsilon = 1e-8);
        assert_relative_eq!(sm.refined_y_mass(), 1.0, epsilon = 1e-8);
        let cs = disc_cs(Matrix::<2>::new(2.0, 0.0, 0.0, 1.0));
        let p = Potential::regularized(2, RegularizedDistance::new(cs.domain())).unwrap();
        let sm = StationaryMeasure::gradient(&cs, &p).unwrap();
        assert_relative_eq!(sm.refined_mass(), 1.0, epsilon = 1e-8);
        assert_relative_eq!(sm.refined_y_mass(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn gaussian_factor_second_moments_are_half_gamma() {
        let g = Matrix::<2>::new(2.0, 0.3, 0.3, 1.0);
        let sm = StationaryMeasure::reflected(&disc_cs(g)).unwrap();
        let m = sm.y_second_moments();
        // Independent oracle: 1D quadrature of y^2 e^{-y^2/s} along each
        // principal direction gives s/2.
        let r = Rule1D::composite(-30.0, 30.0, &[], 16, 16);
        let one_d = |s: f64| r.integrate(|t| t * t * (-t * t / s).exp()) / r.integrate(|t| (-t * t / s).exp());
        assert_relative_eq!(one_d(2.0), 1.0, epsilon = 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[(i, j)] - 0.5 * g[(i, j)]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn constant_function_has_zero_generator_and_residual() {
        let cs = interval_cs();
        let p = Potential::regularized(2, RegularizedDistance::new(cs.domain())).unwrap();
        let sm = StationaryMeasure::gradient(&cs, &p).unwrap();
        assert_eq!(generator_apply(&cs, Some(&p), &ConstantFunction(3.0), &p1(0.3), &p1(0.7)).unwrap(), 0.0);
        assert_eq!(stationarity_residual(&sm, &ConstantFunction(3.0)).unwrap().value, 0.0);
    }

    #[test]
    fn generator_on_coordinates() {
        let cs = disc_cs(Matrix::<2>::new(2.0, 0.5, 0.5, 1.0));
        let p = Potential::regularized(2, RegularizedDistance::new(cs.domain())).unwrap();
        let x = Point::<2>::new(0.3, -0.2);
        let y = Point::<2>::new(0.4, 1.1);
        let gv = p.gradient(&x).unwrap();
        let gy = generator_apply(&cs, Some(&p), &Coordinate::Y(0), &x, &y).unwrap();
        assert_relative_eq!(gy, -0.5 * (cs.gamma().matrix() * gv)[0], epsilon = 1e-12);
        let gx = generator_apply(&cs, Some(&p), &Coordinate::X(0), &x, &y).unwrap();
        assert_relative_eq!(gx, -0.5 * gv[0] + y[0], epsilon = 1e-12);
    }

    #[test]
    fn missing_hessian_is_an_error() {
        struct NoHessian;
        impl TestFunction<1> for NoHessian {
            fn value(&self, _: &Point<1>, _: &Point<1>) -> f64 {
                0.0
            }
            fn grad_x(&self, _: &Point<1>, _: &Point<1>) -> Point<1> {
                p1(0.0)
            }
            fn grad_y(&self, _: &Point<1>, _: &Point<1>) -> Point<1> {
                p1(0.0)
            }
        }
        let cs = interval_cs();
        assert_eq!(generator_apply(&cs, None, &NoHessian, &p1(0.5), &p1(0.0)), Err(Error::MissingHessian));
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let f = BumpProduct::new(
            Point::<2>::new(0.1, -0.2),
            Point::<2>::new(0.3, 0.4),
            Point::<2>::new(0.2, 0.0),
            Point::<2>::new(1.0, 1.5),
        );
        let x = Point::<2>::new(0.2, -0.05);
        let y = Point::<2>::new(0.5, -0.7);
        let h = 1e-6;
        let gx = f.grad_x(&x, &y);
        let gy = f.grad_y(&x, &y);
        let hx = f.hessian_x(&x, &y).unwrap();
        for i in 0..2 {
            let mut e = Point::<2>::zeros();
            e[i] = h;
            let fd = (f.value(&(x + e), &y) - f.value(&(x - e), &y)) / (2.0 * h);
            assert_relative_eq!(gx[i], fd, max_relative = 1e-6);
            let fd = (f.value(&x, &(y + e)) - f.value(&x, &(y - e))) / (2.0 * h);
            assert_relative_eq!(gy[i], fd, max_relative = 1e-6);
            let fd = (f.grad_x(&(x + e), &y) - f.grad_x(&(x - e), &y)) / (2.0 * h);
            for j in 0..2 {
                assert_relative_eq!(hx[(j, i)], fd[j], max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn bump_residual_vanishes_in_one_dimension() {
        let cs = interval_cs();
        let p = Potential::regularized(2, RegularizedDistance::new(cs.domain())).unwrap();
        let sm = StationaryMeasure::gradient(&cs, &p).unwrap();
        let f = BumpProduct::new(p1(0.35), p1(0.2), p1(0.3), p1(1.0));
        let r = stationarity_residual(&sm, &f).unwrap();
        assert!(r.value.abs() <= 1e-6, "residual {}", r.value);
        let wrong = sm.perturbed(1.1).unwrap();
        let r2 = stationarity_residual(&wrong, &f).unwrap();
        assert!(r2.value.abs() > 1e-4, "perturbed residual {}", r2.value);
    }

    #[test]
    fn nonconstant_density_leaves_a_cross_term() {
        // With rho = e^{x}, int (y . grad_x f) rho e^{-V} does not cancel
        // against the K term; the leftover is -int f y . grad rho.
        let cs = interval_cs().with_density(Density::Exponential { axis: 0, rate: 1.0 }).unwrap();
        let p = Potential::regularized(2, RegularizedDistance::new(cs.domain())).unwrap();
        let sm = StationaryMeasure::gradient(&cs, &p).unwrap();
        let f = BumpProduct::new(p1(0.5), p1(0.2), p1(0.5), p1(1.0));
        let r = stationarity_residual(&sm, &f).unwrap();
        let xr = Rule1D::composite(0.3, 0.7, &[], 20, 20);
        let yr = Rule1D::composite(-0.5, 1.5, &[], 20, 20);
        let expected = -xr.integrate(|x| {
            let xp = p1(x);
            yr.integrate(|y| {
                let yp = p1(y);
                f.value(&xp, &yp) * y * sm.density(&xp, &yp)
            })
        });
        assert_relative_eq!(r.value, expected, max_relative = 1e-8);
        assert!(r.value.abs() > 1e-3);
    }

    #[test]
    fn support_touching_boundary_is_rejected() {
        let cs = interval_cs();
        let sm = StationaryMeasure::reflected(&cs).unwrap();
        let f = BumpProduct::new(p1(0.1), p1(0.2), p1(0.0), p1(1.0));
        assert_eq!(stationarity_residual(&sm, &f), Err(Error::SupportNotInside));
    }

    #[test]
    fn uniform_sampler_mean_is_centroid() {
        let cs = disc_cs(Matrix::<2>::new(2.0, 0.0, 0.0, 1.0));
        let sm = StationaryMeasure::reflected(&cs).unwrap();
        let n = 20_000;
        let s = sample_stationary(&sm, n, 11).unwrap();
        let mean = s.iter().fold(Point::<2>::zeros(), |a, (x, _)| a + x) / n as f64;
        // Var of each coordinate under the uniform disc law is 1/4.
        let se = (0.25 / n as f64).sqrt();
        assert!(mean.norm() <= 3.0 * se * 2f64.sqrt());
        let cov = s.iter().fold(Matrix::<2>::zeros(), |a, (_, y)| a + y * y.transpose()) / n as f64;
        assert!((cov[(0, 0)] - 1.0).abs() <= 3.0 * (2.0f64 / n as f64).sqrt());
        assert!((cov[(1, 1)] - 0.5).abs() <= 3.0 * (0.5f64 / n as f64).sqrt());
        assert!(cov[(0, 1)].abs() <= 3.0 * (0.5f64 / n as f64).sqrt());
        assert!(s.iter().all(|(x, _)| cs.domain().contains(x)));
    }

    #[test]
    fn empty_sample() {
        let sm = StationaryMeasure::reflected(&interval_cs()).unwrap();
        assert!(sample_stationary(&sm, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn disc_marginal_is_semicircle() {
        let sm = StationaryMeasure::reflected(&disc_cs(Matrix::<2>::identity())).unwrap();
        let m = sm.x_marginal(0).unwrap();
        assert_relative_eq!(m.raw_mass, 1.0, epsilon = 1e-6);
        for &t in &[-0.7, -0.2, 0.0, 0.4, 0.9] {
            let exact_pdf = 2.0 / PI * (1.0f64 - t * t).sqrt();
            let exact_cdf = 0.5 + (t * (1.0f64 - t * t).sqrt() + t.asin()) / PI;
            assert_relative_eq!(m.pdf(t), exact_pdf, epsilon = 1e-3);
            assert_relative_eq!(m.cdf(t), exact_cdf, epsilon = 1e-5);
        }
    }

    #[test]
    fn mass_of_exp_minus_v_increases_with_n() {
        let cs = interval_cs();
        let res = Resolution::default();
        let masses: Vec<f64> = [1u32, 2, 4, 8, 64]
            .iter()
            .map(|&n| potential_mass(&Potential::regularized(n, RegularizedDistance::new(cs.domain())).unwrap(), &res))
            .collect();
        assert!(masses.windows(2).all(|w| w[1] > w[0]), "{masses:?}");
        assert!(masses[4] < (-1.0f64).exp());
    }

    #[test]
    fn ellipse_uses_polar_rule() {
        let cs = CoefficientSet::new(
            Domain::ellipsoid(Point::<2>::new(1.0, 0.0), Point::<2>::new(2.0, 1.0)).unwrap(),
            Gamma::identity(),
        );
        let sm = StationaryMeasure::reflected(&cs).unwrap();
        assert_relative_eq!(sm.c_x(), 1.0 / (2.0 * PI), epsilon = 1e-12);
        assert_relative_eq!(sm.x_mean()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn three_dimensional_rule_is_monte_carlo() {
        let cs = CoefficientSet::new(Domain::<3>::ball(Point::<3>::zeros(), 1.0).unwrap(), Gamma::identity());
        let sm = StationaryMeasure::reflected(&cs).unwrap();
        assert!(sm.x_rule().monte_carlo);
        assert_relative_eq!(1.0 / sm.c_x(), 4.0 / 3.0 * PI, max_relative = 1e-2);
        assert_relative_eq!(sm.c_y(), PI.powf(-1.5), max_relative = 1e-8);
    }
}
