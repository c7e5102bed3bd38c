use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("site {site} diverged: {reason}")]
    DivergedSite { site: usize, reason: String },

    #[error("cavity collapse at site {site}: cavity precision {precision:e}")]
    CavityCollapse { site: usize, precision: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("unsupported cumulant order {order} for {kind}")]
    UnsupportedOrder { order: usize, kind: String },

    #[error("expansion breakdown: truncated R = {value:e} is not positive")]
    ExpansionBreakdown { value: f64 },

    #[error("estimate undefined: {hits} in-box hits out of {samples} samples")]
    EstimateUndefined { hits: usize, samples: usize },

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("linear algebra: {0}")]
    LinearAlgebra(String),

    #[error("io: {0}")]
    Io(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
