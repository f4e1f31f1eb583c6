use thiserror::Error;

/// Crate-wide error type. Soft outcomes (a diverging iteration, an
/// unbounded lambda range) are represented as values, not errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("quadrature did not converge: {0}")]
    NonConvergentQuadrature(String),

    #[error("no differentiable reconstruction available: {0}")]
    DerivativeUnavailable(String),

    #[error("unknown catalog example id {0} (valid ids are 1..=10)")]
    UnknownExample(u32),

    #[error("parameter out of range for catalog example {id}: {msg}")]
    ParamOutOfRange { id: u32, msg: String },

    #[error("horizon too small: {0}")]
    HorizonTooSmall(String),

    #[error("source term is not integrable against r^(N-1) near the origin: {0}")]
    NonIntegrableSource(String),

    #[error("shooting trajectory left the admissible range before r=1: {0}")]
    BlowUpBeforeBoundary(String),

    #[error("adaptive integrator stalled: {0}")]
    StiffnessFailure(String),

    #[error("Rayleigh quotient denominator is zero")]
    ZeroDenominator,

    #[error("no divergent upper probe found up to lambda={0}; lambda* = infinity")]
    NoUpperDivergence(f64),

    #[error("stability quadratic form implemented for p >= 2 only (got p={0})")]
    UnsupportedP(f64),

    #[error("transform domain exceeded: {0}")]
    TransformDomainExceeded(String),

    #[error("config error at {location}: {msg}")]
    ConfigParse { location: String, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(location: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::ConfigParse {
            location: location.into(),
            msg: msg.into(),
        }
    }
}
