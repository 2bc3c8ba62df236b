use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("input domain: {0}")]
    InputDomain(String),
    /// Invalid construction parameters (ellipticity constants, grid spacing, stencil set, ...).
    #[error("configuration: {0}")]
    Config(String),
    /// A wide stencil offset leaves the lattice.
    #[error("stencil construction: {0}")]
    Stencil(String),
    /// Time integration produced a non-finite value.
    #[error("integration failure at node {node} (t = {time}): {message}")]
    Integration {
        node: usize,
        time: f64,
        message: String,
    },
    /// An iterative procedure did not converge; the history is attached.
    #[error("no convergence after {steps} steps: {message} (last values {history:?})")]
    NoConvergence {
        steps: usize,
        message: String,
        history: Vec<f64>,
    },
    /// A barrier support escapes the domain.
    #[error("barrier support radius {radius} escapes the domain (room {room})")]
    DomainViolation { radius: f64, room: f64 },
    /// Serialization or file-format problem.
    #[error("format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
