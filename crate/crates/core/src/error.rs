use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("expected {expected} components, found {found}")]
    ComponentMismatch { expected: usize, found: usize },

    #[error("operation requires {expected} mode, got {found}")]
    WrongMode {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero-energy solution crosses zero at r = {radius} inside the support (bound-state regime)")]
    BoundState { radius: f64 },

    #[error("no sign change of the residual scattering length for C in ({lower}, {upper}]: residuals {residual_lower:e} .. {residual_upper:e}")]
    RootNotBracketed {
        lower: f64,
        upper: f64,
        residual_lower: f64,
        residual_upper: f64,
    },

    #[error("Hilbert space dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: u128, cap: usize },

    #[error("state and operator refer to incompatible bases")]
    BasisMismatch,

    #[error("Krylov propagation did not converge within {substeps} substeps")]
    KrylovNotConverged { substeps: usize },

    #[error("implicit substep did not converge")]
    ImplicitNotConverged,

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
