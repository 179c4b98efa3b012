use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate {kind} {index}: measure {measure:e}")]
    Degenerate {
        kind: &'static str,
        index: usize,
        measure: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value at vertex {vertex}")]
    NonFiniteValue { vertex: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("instability at step {step}: energy {energy:e} exceeds {factor:e} x reference {reference:e}")]
    Instability {
        step: usize,
        energy: f64,
        reference: f64,
        factor: f64,
    },

    #[error("instability at step {step}: non-finite field values")]
    NonFiniteState { step: usize },

    #[error("power iteration did not converge in {iterations} iterations (last estimate {last_estimate:e}, relative change {last_change:e})")]
    PowerIteration {
        iterations: usize,
        last_estimate: f64,
        last_change: f64,
        last_iterate: Vec<f64>,
    },

    #[error("level {level}: {source}")]
    AtLevel {
        level: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("observer failed at step {step}: {message}")]
    Observer { step: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for blow-ups detected by the time stepper, looking through level wrappers.
    pub fn is_instability(&self) -> bool {
        match self {
            Error::Instability { .. } | Error::NonFiniteState { .. } => true,
            Error::AtLevel { source, .. } => source.is_instability(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::AtLevel { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
