use thiserror::Error;

use crate::geomflow::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite value while evaluating {what} at {point:?}")]
    Evaluation { what: String, point: Vec<f64> },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("parameter `{name}` = {value} violates {constraint}")]
    Parameter {
        name: String,
        value: f64,
        constraint: String,
    },

    #[error("invalid model definition: {0}")]
    ModelDefinition(String),

    #[error("projection onto the critical manifold failed after {iterations} iterations (residual {residual:.3e})")]
    Projection { iterations: usize, residual: f64 },

    #[error("search failed: {0}")]
    Search(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
