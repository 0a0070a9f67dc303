use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("linear solve failed at equation {equation} (global dof {dof:?}): pivot {pivot:e}")]
    Solve {
        equation: usize,
        dof: Option<usize>,
        pivot: f64,
    },

    #[error("circle packing failed: {0}")]
    Packing(String),

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
