use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} outside the map horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("singular domain map: J = {det:e} at xi = ({x}, {y}), t = {t}")]
    SingularJacobian { det: f64, x: f64, y: f64, t: f64 },

    #[error("non-finite value {value} at vertex {vertex} ({x}, {y})")]
    NonFiniteValue { vertex: usize, x: f64, y: f64, value: f64 },

    #[error("non-finite integrand on element {element} at quadrature point {point}")]
    NonFiniteIntegrand { element: usize, point: usize },

    #[error("triangle index {index} out of range (mesh has {len} triangles)")]
    InvalidElement { index: usize, len: usize },

    #[error("meshes do not share a refinement history: {0}")]
    LineageMismatch(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{method} did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverNotConverged {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{method} broke down at iteration {iterations} (relative residual {residual:e})")]
    SolverBreakdown {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("the discretisation error is zero; effectivity is undefined")]
    ZeroError,
}
