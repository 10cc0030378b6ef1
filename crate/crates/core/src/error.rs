use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RmtError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical procedure failed to converge or hit a singularity.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An experiment or sampler configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),
    /// The particle integrator could not keep two particles apart.
    #[error("integration error: particles {left} and {right} collided at t = {time}")]
    Integration {
        left: usize,
        right: usize,
        time: f64,
    },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = RmtError> = std::result::Result<T, E>;

impl RmtError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        RmtError::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        RmtError::Numeric(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        RmtError::Config(msg.into())
    }
}

impl From<std::io::Error> for RmtError {
    fn from(e: std::io::Error) -> Self {
        RmtError::Io(e.to_string())
    }
}
