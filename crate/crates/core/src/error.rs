use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver diverged at step {step}: non-finite {field} at node ({i}, {j})")]
    Divergence {
        step: usize,
        field: &'static str,
        i: usize,
        j: usize,
    },

    #[error("{solver} did not converge within {steps} steps (residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        steps: usize,
        residual: f64,
    },

    #[error("singular closure system for normal {normal:?}")]
    SingularClosure { normal: [i32; 2] },

    #[error("trajectory length mismatch: forward has {forward} levels, adjoint expects {adjoint}")]
    TrajectoryMismatch { forward: usize, adjoint: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
