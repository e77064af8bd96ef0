use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("query outside field domain: {0}")]
    OutOfDomain(String),

    #[error("invalid grid specification: {0}")]
    InvalidGrid(String),

    #[error("degenerate footprint shape: {0}")]
    DegenerateShape(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("quadratic program is infeasible: {0}")]
    InfeasibleProblem(String),

    #[error("invalid quadratic program: {0}")]
    InvalidProblem(String),

    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed {format} data: {message}")]
    Format { format: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
