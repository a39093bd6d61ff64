use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("eigenvalue solver did not converge ({0})")]
    EigenSolveFailure(String),
    #[error("non-finite plant state at t = {t} min")]
    NonFiniteState { t: f64 },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("empty KPI window")]
    EmptyWindow,
    #[error("Infeasible: demand {demand} outside ({low}, {high})")]
    Infeasible { demand: f64, low: f64, high: f64 },
    #[error("no convergence after {iterations} iterations ({what})")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("optimality condition violated: {0}")]
    ConditionViolated(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no route from node {src} to node {dst}")]
    UnknownRoute { src: usize, dst: usize },
    #[error("unknown chaos target `{0}`")]
    UnknownTarget(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
