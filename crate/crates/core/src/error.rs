use alloc::string::String;
use alloc::vec::Vec;

/// Every failure the core kernels can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point {point:?} is outside the closure of the domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("boundary projection of {point:?} did not converge (residual {residual:e})")]
    ProjectionDiverged { point: Vec<f64>, residual: f64 },
    #[error("point is {distance:e} from the boundary, tolerance is {tol:e}")]
    TooFarFromBoundary { distance: f64, tol: f64 },
    #[error("potential overflow: regularized distance {delta:e} is below the floor {floor:e}")]
    PotentialOverflow { delta: f64, floor: f64 },
    #[error("increment of size {size:e} exceeds the feature-size guard {guard:e}; refine the path")]
    IncrementTooLarge { size: f64, guard: f64 },
    #[error("push direction is not transversal to the boundary at {point:?} (p.n = {dot:e})")]
    PushNotTransversal { point: Vec<f64>, dot: f64 },
    #[error("could not bracket the local-time increment from {point:?} (last signed distance {last:e})")]
    BracketFailure { point: Vec<f64>, last: f64 },
    #[error("boundary overflow: step could not stay inside the domain after {halvings} halvings")]
    BoundaryOverflow { halvings: u32 },
    #[error("Girsanov weight overflow (log-weight {log_weight:e})")]
    WeightOverflow { log_weight: f64 },
    #[error("test function has no Hessian callback")]
    MissingHessian,
    #[error("test-function support is not strictly inside the domain")]
    SupportNotInside,
    #[error("rejection acceptance rate {rate:e} is below 1e-4; use a better proposal")]
    AcceptanceTooLow { rate: f64 },
    #[error("empty batch")]
    EmptyBatch,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn coords<const D: usize>(p: &crate::Point<D>) -> Vec<f64> {
    p.iter().copied().collect()
}
