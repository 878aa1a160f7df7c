use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("graph not connected after {0} attempts")]
    Disconnected(usize),

    #[error("zero matrix has no spectral normalization")]
    ZeroMatrix,

    #[error("jacobi eigensolver did not converge in {0} sweeps")]
    NoConvergence(usize),

    #[error("resonant eigenvalue pair ({i}, {j}): λi + λj = {sum:e}")]
    Resonant { i: usize, j: usize, sum: f64 },

    #[error("consensus weight {value:e} at ({i}, {j}) is below the floor {floor:e}")]
    WeightBelowFloor { i: usize, j: usize, value: f64, floor: f64 },

    #[error("consensus weights are not supported on the graph at ({0}, {1})")]
    WeightSupport(usize, usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("simulation blew up at step {0}")]
    BlowUp(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
