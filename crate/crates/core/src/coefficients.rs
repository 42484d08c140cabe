//! Diffusion data `(sigma, A, rho, b)`, inert-drift data `(Gamma, v)` and the
//! potential family `V_n = exp(1 / (n delta))`.

use alloc::format;
use alloc::sync::Arc;

use crate::error::{coords, Error, Result};
use crate::geometry::{Domain, RegularizedDistance};
use crate::linalg::{is_symmetric, sym_eigenvalues, sym_sqrt, Matrix, Point};
#[allow(unused_imports)]
use num_traits::Float;

/// A matrix-valued diffusion field `A(x)`.
pub trait MatrixField<const D: usize>: Send + Sync {
    fn a(&self, x: &Point<D>) -> Matrix<D>;
    /// Column divergence `sum_i d_i a_ik`, if known analytically.
    fn divergence(&self, _x: &Point<D>) -> Option<Point<D>> {
        None
    }
}

/// A positive scalar field `rho(x)`.
pub trait ScalarField<const D: usize>: Send + Sync {
    fn value(&self, x: &Point<D>) -> f64;
    fn gradient(&self, _x: &Point<D>) -> Option<Point<D>> {
        None
    }
}

/// A user potential `V` with its gradient; `V` must blow up at the boundary.
pub trait PotentialField<const D: usize>: Send + Sync {
    fn value(&self, x: &Point<D>) -> f64;
    fn gradient(&self, x: &Point<D>) -> Point<D>;
}

pub type VectorFieldFn<const D: usize> = Arc<dyn Fn(&Point<D>) -> Point<D> + Send + Sync>;

#[derive(Clone)]
pub enum Diffusion<const D: usize> {
    Identity,
    Constant { a: Matrix<D>, sigma: Matrix<D>, sigma_inv: Matrix<D> },
    Field(Arc<dyn MatrixField<D>>),
}

impl<const D: usize> Diffusion<D> {
    /// Constant SPD diffusion matrix.
    pub fn constant(a: Matrix<D>) -> Result<Self> {
        if !is_symmetric(&a) {
            return Err(Error::InvalidCoefficients("diffusion matrix A is not symmetric".into()));
        }
        let sigma = sym_sqrt(&a)
            .ok_or_else(|| Error::InvalidCoefficients("diffusion matrix A is not positive definite".into()))?;
        let sigma_inv = sigma
            .try_inverse()
            .ok_or_else(|| Error::InvalidCoefficients("sigma is singular".into()))?;
        Ok(Self::Constant { a, sigma, sigma_inv })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        if diag.len() != D {
            return Err(Error::InvalidCoefficients(format!("diagonal has {} entries, dimension is {D}", diag.len())));
        }
        Self::constant(Matrix::<D>::from_diagonal(&Point::<D>::from_row_slice(diag)))
    }
}

#[derive(Clone)]
pub enum Density<const D: usize> {
    Constant(f64),
    /// `rho(x) = exp(rate * x[axis])`.
    Exponential { axis: usize, rate: f64 },
    Field(Arc<dyn ScalarField<D>>),
}

/// How derivatives of user-supplied `rho` and `A` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Use analytic callbacks; fall back to differences when absent.
    Analytic,
    /// Central differences with `h = 1e-5 * diameter`.
    FiniteDifference,
}

/// Scaling of the conormal push: `u = A n / 2` or `u = A n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conormal {
    Half,
    Full,
}

/// The boundary field `v` in `dK = v(X) dL`.
#[derive(Clone)]
pub enum InertField<const D: usize> {
    /// `v = Gamma n`.
    GammaNormal,
    /// `v = a0 u`.
    ScaledConormal { a0: f64 },
    Custom(VectorFieldFn<D>),
}

/// Symmetric positive-definite inert-drift matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gamma<const D: usize> {
    matrix: Matrix<D>,
    chol: Matrix<D>,
    inverse: Matrix<D>,
}

impl<const D: usize> Gamma<D> {
    pub fn new(matrix: Matrix<D>) -> Result<Self> {
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCoefficients("Gamma has non-finite entries".into()));
        }
        if !is_symmetric(&matrix) {
            return Err(Error::InvalidCoefficients("Gamma is not symmetric".into()));
        }
        let chol = matrix
            .cholesky()
            .ok_or_else(|| Error::InvalidCoefficients("Gamma is not positive definite".into()))?;
        let inverse = chol.inverse();
        Ok(Self { matrix, chol: chol.l(), inverse })
    }

    pub fn identity() -> Self {
        Self::new(Matrix::<D>::identity()).expect("identity is SPD")
    }

    pub fn matrix(&self) -> &Matrix<D> {
        &self.matrix
    }

    /// Lower Cholesky factor `L` with `L L^T = Gamma`.
    pub fn cholesky_factor(&self) -> &Matrix<D> {
        &self.chol
    }

    /// Solves `Gamma z = y` through the Cholesky factor.
    pub fn solve(&self, y: &Point<D>) -> Point<D> {
        let z = self.chol.solve_lower_triangular(y).expect("non-singular factor");
        self.chol.transpose().solve_upper_triangular(&z).expect("non-singular factor")
    }

    /// `(Gamma^{-1} y, y)`.
    pub fn inverse_quadratic(&self, y: &Point<D>) -> f64 {
        y.dot(&(self.inverse * y))
    }

    /// Covariance of the density `exp(-(Gamma^{-1} y, y))`, which is `Gamma / 2`.
    pub fn stationary_covariance(&self) -> Matrix<D> {
        self.matrix * 0.5
    }

    /// Factor `L / sqrt(2)` mapping standard normals to covariance `Gamma / 2`.
    pub fn stationary_factor(&self) -> Matrix<D> {
        self.chol * core::f64::consts::FRAC_1_SQRT_2
    }
}

/// `b(x)` with a flag recording whether a one-sided stencil was needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftVector<const D: usize> {
    pub value: Point<D>,
    pub one_sided_stencil: bool,
}

/// Ellipticity and density bounds measured on a sample grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

/// Diffusion and inert-drift coefficients on the closure of a domain.
#[derive(Clone)]
pub struct CoefficientSet<const D: usize> {
    domain: Domain<D>,
    diffusion: Diffusion<D>,
    density: Density<D>,
    gamma: Gamma<D>,
    inert_field: InertField<D>,
    conormal: Conormal,
    derivatives: DerivativeMode,
    bounds: CoefficientBounds,
}

const VALIDATION_GRID: usize = 16;

impl<const D: usize> CoefficientSet<D> {
    /// `sigma = I`, `rho = 1`, `v = Gamma n`, full conormal.
    pub fn new(domain: Domain<D>, gamma: Gamma<D>) -> Self {
        Self {
            domain,
            diffusion: Diffusion::Identity,
            density: Density::Constant(1.0),
            gamma,
            inert_field: InertField::GammaNormal,
            conormal: Conormal::Full,
            derivatives: DerivativeMode::Analytic,
            bounds: CoefficientBounds { lambda_min: 1.0, lambda_max: 1.0, rho_min: 1.0, rho_max: 1.0 },
        }
    }

    pub fn with_diffusion(mut self, diffusion: Diffusion<D>) -> Result<Self> {
        self.diffusion = diffusion;
        self.revalidate()?;
        Ok(self)
    }

    pub fn with_density(mut self, density: Density<D>) -> Result<Self> {
        if let Density::Exponential { axis, .. } = density {
            if axis >= D {
                return Err(Error::InvalidCoefficients(format!("density axis {axis} >= dimension {D}")));
            }
        }
        self.density = density;
        self.revalidate()?;
        Ok(self)
    }

    pub fn with_inert_field(mut self, field: InertField<D>) -> Self {
        self.inert_field = field;
        self
    }

    pub fn with_conormal(mut self, conormal: Conormal) -> Self {
        self.conormal = conormal;
        self
    }

    pub fn with_derivatives(mut self, mode: DerivativeMode) -> Self {
        self.derivatives = mode;
        self
    }

    fn revalidate(&mut self) -> Result<()> {
        let (lo, hi) = self.domain.bounding_box();
        let mut b = CoefficientBounds {
            lambda_min: f64::INFINITY,
            lambda_max: 0.0,
            rho_min: f64::INFINITY,
            rho_max: 0.0,
        };
        let n = VALIDATION_GRID;
        for idx in 0..n.pow(D as u32) {
            let mut rem = idx;
            let mut x = Point::<D>::zeros();
            for i in 0..D {
                x[i] = lo[i] + (hi[i] - lo[i]) * ((rem % n) as f64 + 0.5) / n as f64;
                rem /= n;
            }
            if !self.domain.in_closure(&x) {
                continue;
            }
            let a = self.a(&x);
            if !is_symmetric(&a) {
                return Err(Error::InvalidCoefficients(format!("A is not symmetric at {:?}", coords(&x))));
            }
            let eig = sym_eigenvalues(&a);
            b.lambda_min = b.lambda_min.min(eig[0]);
            b.lambda_max = b.lambda_max.max(eig[D - 1]);
            let r = self.rho(&x);
            if !r.is_finite() {
                return Err(Error::InvalidCoefficients(format!("rho is not finite at {:?}", coords(&x))));
            }
            b.rho_min = b.rho_min.min(r);
            b.rho_max = b.rho_max.max(r);
        }
        if !(b.lambda_min > 0.0) {
            return Err(Error::InvalidCoefficients(format!("A is not uniformly elliptic (min eigenvalue {})", b.lambda_min)));
        }
        if !(b.rho_min > 0.0) {
            return Err(Error::InvalidCoefficients(format!("rho is not bounded below by a positive constant ({})", b.rho_min)));
        }
        self.bounds = b;
        Ok(())
    }

    pub fn domain(&self) -> &Domain<D> {
        &self.domain
    }

    pub fn gamma(&self) -> &Gamma<D> {
        &self.gamma
    }

    pub fn density(&self) -> &Density<D> {
        &self.density
    }

    pub fn diffusion(&self) -> &Diffusion<D> {
        &self.diffusion
    }

    pub fn conormal_convention(&self) -> Conormal {
        self.conormal
    }

    pub fn inert_field(&self) -> &InertField<D> {
        &self.inert_field
    }

    pub fn bounds(&self) -> CoefficientBounds {
        self.bounds
    }

    fn fd_step(&self) -> f64 {
        1e-5 * self.domain.diameter()
    }

    pub fn a(&self, x: &Point<D>) -> Matrix<D> {
        match &self.diffusion {
            Diffusion::Identity => Matrix::<D>::identity(),
            Diffusion::Constant { a, .. } => *a,
            Diffusion::Field(f) => f.a(x),
        }
    }

    pub fn sigma(&self, x: &Point<D>) -> Matrix<D> {
        match &self.diffusion {
            Diffusion::Identity => Matrix::<D>::identity(),
            Diffusion::Constant { sigma, .. } => *sigma,
            Diffusion::Field(f) => sym_sqrt(&f.a(x)).unwrap_or_else(|| Matrix::<D>::from_element(f64::NAN)),
        }
    }

    pub fn sigma_inv(&self, x: &Point<D>) -> Matrix<D> {
        match &self.diffusion {
            Diffusion::Identity => Matrix::<D>::identity(),
            Diffusion::Constant { sigma_inv, .. } => *sigma_inv,
            Diffusion::Field(_) => self
                .sigma(x)
                .try_inverse()
                .unwrap_or_else(|| Matrix::<D>::from_element(f64::NAN)),
        }
    }

    /// `sigma(x) * w`.
    pub fn diffuse(&self, x: &Point<D>, w: &Point<D>) -> Point<D> {
        match &self.diffusion {
            Diffusion::Identity => *w,
            Diffusion::Constant { sigma, .. } => sigma * w,
            Diffusion::Field(_) => self.sigma(x) * w,
        }
    }

    pub fn rho(&self, x: &Point<D>) -> f64 {
        match &self.density {
            Density::Constant(c) => *c,
            Density::Exponential { axis, rate } => (rate * x[*axis]).exp(),
            Density::Field(f) => f.value(x),
        }
    }

    /// Central-difference stencil around `x` along `axis`, falling back to a
    /// one-sided stencil when a node leaves the closure.
    fn stencil(&self, x: &Point<D>, axis: usize) -> (Point<D>, Point<D>, f64, bool) {
        let h = self.fd_step();
        let mut e = Point::<D>::zeros();
        e[axis] = h;
        let plus = x + e;
        let minus = x - e;
        match (self.domain.in_closure(&plus), self.domain.in_closure(&minus)) {
            (true, true) => (plus, minus, 2.0 * h, false),
            (true, false) => (plus, *x, h, true),
            (false, true) => (*x, minus, h, true),
            (false, false) => (plus, minus, 2.0 * h, true),
        }
    }

    /// `grad log rho` and whether a one-sided stencil was used.
    pub fn grad_log_rho(&self, x: &Point<D>) -> (Point<D>, bool) {
        match &self.density {
            Density::Constant(_) => (Point::<D>::zeros(), false),
            Density::Exponential { axis, rate } => {
                let mut g = Point::<D>::zeros();
                g[*axis] = *rate;
                (g, false)
            }
            Density::Field(f) => {
                if self.derivatives == DerivativeMode::Analytic {
                    if let Some(g) = f.gradient(x) {
                        return (g / f.value(x), false);
                    }
                }
                let mut g = Point::<D>::zeros();
                let mut flagged = false;
                for i in 0..D {
                    let (p, m, span, one_sided) = self.stencil(x, i);
                    g[i] = (f.value(&p).ln() - f.value(&m).ln()) / span;
                    flagged |= one_sided;
                }
                (g, flagged)
            }
        }
    }

    /// Column divergence of `A`, `sum_i d_i a_ik`.
    pub fn divergence_a(&self, x: &Point<D>) -> (Point<D>, bool) {
        match &self.diffusion {
            Diffusion::Identity | Diffusion::Constant { .. } => (Point::<D>::zeros(), false),
            Diffusion::Field(f) => {
                if self.derivatives == DerivativeMode::Analytic {
                    if let Some(d) = f.divergence(x) {
                        return (d, false);
                    }
                }
                let mut div = Point::<D>::zeros();
                let mut flagged = false;
                for i in 0..D {
                    let (p, m, span, one_sided) = self.stencil(x, i);
                    let da = (f.a(&p) - f.a(&m)) / span;
                    for k in 0..D {
                        div[k] += da[(i, k)];
                    }
                    flagged |= one_sided;
                }
                (div, flagged)
            }
        }
    }

    /// `b_k = (1 / 2 rho) sum_i d_i (rho a_ik) = (div A)_k / 2 + (A grad log rho)_k / 2`.
    pub fn drift_b(&self, x: &Point<D>) -> DriftVector<D> {
        if matches!(self.diffusion, Diffusion::Identity) && matches!(self.density, Density::Constant(_)) {
            return DriftVector { value: Point::<D>::zeros(), one_sided_stencil: false };
        }
        let (div, f1) = self.divergence_a(x);
        let (glr, f2) = self.grad_log_rho(x);
        let value = (div + self.a(x) * glr) * 0.5;
        DriftVector { value, one_sided_stencil: f1 || f2 }
    }

    fn conormal_scale(conv: Conormal) -> f64 {
        match conv {
            Conormal::Half => 0.5,
            Conormal::Full => 1.0,
        }
    }

    /// Conormal `u = A n / 2` (half) or `A n` (full) at a boundary point.
    pub fn conormal_u(&self, x_boundary: &Point<D>, convention: Conormal) -> Result<Point<D>> {
        let n = self.domain.inward_normal(x_boundary)?;
        Ok(self.a(x_boundary) * n * Self::conormal_scale(convention))
    }

    /// Push direction at (or near) the boundary using this set's convention.
    pub(crate) fn push_at(&self, x: &Point<D>) -> Result<(Point<D>, Point<D>)> {
        let n = self.domain.normal_near(x)?;
        let u = match &self.diffusion {
            Diffusion::Identity => n * Self::conormal_scale(self.conormal),
            _ => self.a(x) * n * Self::conormal_scale(self.conormal),
        };
        Ok((u, n))
    }

    /// `v(x)` at a contact point with inward normal `n` and push `u`.
    pub(crate) fn inert_v(&self, x: &Point<D>, n: &Point<D>, u: &Point<D>) -> Point<D> {
        match &self.inert_field {
            InertField::GammaNormal => self.gamma.matrix() * n,
            InertField::ScaledConormal { a0 } => u * *a0,
            InertField::Custom(f) => f(x),
        }
    }
}

/// The potential `V` of the gradient family.
#[derive(Clone)]
pub enum Potential<const D: usize> {
    /// `V_n(x) = exp(1 / (n delta(x)))`.
    RegularizedVn { n: u32, rd: RegularizedDistance<D>, floor: f64 },
    UserSupplied { field: Arc<dyn PotentialField<D>>, domain: Domain<D> },
}

impl<const D: usize> Potential<D> {
    /// `V_n` on the given regularized distance, with `delta_floor = 1e-12 * diameter`.
    pub fn regularized(n: u32, rd: RegularizedDistance<D>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("potential index n must be positive".into()));
        }
        let floor = 1e-12 * rd.domain().diameter();
        Ok(Self::RegularizedVn { n, rd, floor })
    }

    pub fn user(field: Arc<dyn PotentialField<D>>, domain: Domain<D>) -> Self {
        Self::UserSupplied { field, domain }
    }

    pub fn domain(&self) -> &Domain<D> {
        match self {
            Self::RegularizedVn { rd, .. } => rd.domain(),
            Self::UserSupplied { domain, .. } => domain,
        }
    }

    pub fn index(&self) -> Option<u32> {
        match self {
            Self::RegularizedVn { n, .. } => Some(*n),
            Self::UserSupplied { .. } => None,
        }
    }

    /// `V(x)` and `grad V(x)`. Errors when `delta` is below the floor or the
    /// potential is not representable.
    pub fn value_grad(&self, x: &Point<D>) -> Result<(f64, Point<D>)> {
        match self {
            Self::RegularizedVn { n, rd, floor } => {
                let (delta, gd) = rd.value_grad(x)?;
                if delta < *floor {
                    return Err(Error::PotentialOverflow { delta, floor: *floor });
                }
                let nd = *n as f64 * delta;
                let v = (1.0 / nd).exp();
                let g = gd * (-v / (nd * delta));
                if !v.is_finite() || !crate::linalg::all_finite(&g) {
                    return Err(Error::PotentialOverflow { delta, floor: *floor });
                }
                Ok((v, g))
            }
            Self::UserSupplied { field, domain } => {
                if !domain.contains(x) {
                    return Err(Error::OutsideDomain { point: coords(x) });
                }
                let v = field.value(x);
                let g = field.gradient(x);
                if !v.is_finite() || !crate::linalg::all_finite(&g) {
                    return Err(Error::PotentialOverflow { delta: f64::NAN, floor: 0.0 });
                }
                Ok((v, g))
            }
        }
    }

    pub fn gradient(&self, x: &Point<D>) -> Result<Point<D>> {
        self.value_grad(x).map(|(_, g)| g)
    }

    /// `V(x)`, `+inf` outside the domain or where it overflows.
    pub fn value(&self, x: &Point<D>) -> f64 {
        match self {
            Self::RegularizedVn { n, rd, .. } => match rd.value(x) {
                Ok(delta) if delta > 0.0 => (1.0 / (*n as f64 * delta)).exp(),
                _ => f64::INFINITY,
            },
            Self::UserSupplied { field, domain } => {
                if domain.contains(x) {
                    field.value(x)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `exp(-V(x))`, zero outside the domain.
    pub fn weight(&self, x: &Point<D>) -> f64 {
        (-self.value(x)).exp()
    }
}
