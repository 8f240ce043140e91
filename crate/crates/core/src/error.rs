use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("code index {index} out of range for codebook of {len} codes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("PE mode conflict: operation needs {expected}, array is in {found}")]
    ModeConflict { expected: &'static str, found: &'static str },

    #[error("{buffer} capacity exceeded: tile needs {needed} bytes, buffer half holds {available}")]
    Capacity { buffer: &'static str, needed: u64, available: u64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("workload {field}: {message}")]
    Workload { field: String, message: String },

    #[error("malformed document at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("dependency cycle among ops [{}]", .0.join(", "))]
    Cycle(Vec<String>),
}

impl Error {
    /// Capacity and scheduling failures, as opposed to bad input.
    pub fn is_resource_error(&self) -> bool {
        matches!(self, Error::Capacity { .. } | Error::Infeasible(_))
    }

    pub(crate) fn workload(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Workload { field: field.into(), message: message.into() }
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
