use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    BadGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge within {panels} panels (last change {change:e})")]
    NonIntegrable { panels: usize, change: f64 },

    #[error("malformed kernel table: {0}")]
    KernelTable(String),

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    #[error("no node lies at least {cutoff} from the boundary")]
    DomainTooSmall { cutoff: f64 },

    #[error("explicit step violates stability bound: {0}")]
    UnstableTimeStep(String),

    #[error("solution blew up at step {step}, node {node} (value {value})")]
    Blowup { step: usize, node: usize, value: f64 },

    #[error("eigen-iteration did not converge after {iterations} iterations (estimate {estimate}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        estimate: f64,
        residual: f64,
    },

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("singular Jacobian")]
    SingularJacobian,

    #[error("biomass exceeded the decay envelope at t={t} by {margin:e}")]
    EnvelopeViolated { t: f64, margin: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::BadGrid(_)
                | Error::InvalidParameter(_)
                | Error::KernelTable(_)
                | Error::UnstableTimeStep(_)
                | Error::Io(_)
        )
    }
}
