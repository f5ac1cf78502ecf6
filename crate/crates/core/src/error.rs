use thiserror::Error;

/// Errors raised by the geometry, elliptic, and time-stepping layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("time {t} outside motion horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("incompatible Neumann data: boundary flux minus source integrates to {defect:e} (must vanish)")]
    IncompatibleFlux { defect: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("plug-in motion violates unit Jacobian: det = {det} at t = {t}")]
    Jacobian { det: f64, t: f64 },

    #[error("elliptic solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("CFL violated: Courant number {courant:.4} exceeds limit {limit}; use dt <= {suggested_dt:e}")]
    Cfl {
        courant: f64,
        limit: f64,
        suggested_dt: f64,
    },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for FlowError {
    fn from(e: std::io::Error) -> Self {
        FlowError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;
