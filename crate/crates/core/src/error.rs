use thiserror::Error;

/// Errors raised across the solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate geometry in cell {cell}: {detail}")]
    DegenerateGeometry { cell: usize, detail: String },

    #[error("Newton iteration failed: {0}")]
    NewtonFailure(String),

    #[error("singular linear system: {0}")]
    SingularMatrix(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
