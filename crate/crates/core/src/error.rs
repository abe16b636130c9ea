use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("solver diverged after {outer_iters} outer iterations: {reason}")]
    SolverDiverged { outer_iters: usize, reason: String },
    #[error("extension infeasible at column {column}")]
    ExtensionInfeasible { column: usize },
    #[error("infeasible lengths in patch {patch}")]
    InfeasibleLengths { patch: usize },
    #[error("infeasible direction in patch {patch}")]
    InfeasibleDirection { patch: usize },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn topology(msg: impl Into<String>) -> Self {
        Error::Topology(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateGeometry(msg.into())
    }
}
