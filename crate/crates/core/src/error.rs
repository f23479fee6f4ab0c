use thiserror::Error;

use crate::grid_io::{BusId, Violation};

#[derive(Debug, Error)]
pub enum GridIoError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: reference to unknown bus {bus}")]
    UnknownBus { bus: BusId, line: usize },
    #[error("invalid case: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("network is disconnected ({islands} islands)")]
    Disconnected { islands: usize },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("no convergence after {iterations} iterations (mismatch {mismatch:.3e})")]
    NoConvergence { iterations: usize, mismatch: f64 },
}

#[derive(Debug, Error)]
pub enum SmallSignalError {
    #[error("outage of branch {branch} islands part of the network")]
    Islanding { branch: usize },
    #[error("reduced network admittance is singular")]
    SingularNetwork,
    #[error("operating point not usable: {0}")]
    BadOperatingPoint(String),
    #[error("eigenvalue iteration did not converge for a {dimension}x{dimension} matrix")]
    EigenNoConvergence { dimension: usize },
    #[error("matrix is empty, non-square or has non-finite entries")]
    BadMatrix,
    #[error("damping ratio undefined at the origin")]
    OriginMode,
    #[error("contingency on branch {branch}: {source}")]
    Contingency {
        branch: usize,
        #[source]
        source: Box<SmallSignalError>,
    },
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error("power iteration did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("unsupported model file version {found}")]
    Version { found: u32 },
    #[error("model file is not a model file")]
    BadMagic,
    #[error("model file truncated: needed {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("model file inconsistent: {0}")]
    Inconsistent(String),
}

/// Crate-level error, used by the pipeline and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    GridIo(#[from] GridIoError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    SmallSignal(#[from] SmallSignalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Format {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Process exit code: 1 usage, 2 data/validation, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::PowerFlow(PowerFlowError::Disconnected { .. }) => 2,
            Error::PowerFlow(_) | Error::SmallSignal(_) => 3,
            Error::Graph(GraphError::NoConvergence { .. }) => 3,
            _ => 2,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
