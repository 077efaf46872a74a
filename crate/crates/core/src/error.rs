use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is numerically rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("projection onto the reference subspace is numerically singular")]
    SingularProjection,

    #[error("columns are not orthonormal (||X^T X - I||_F = {0:e})")]
    NotOrthonormal(f64),

    #[error("invalid gap: lambda_k = {lambda_k} must exceed 2*sqrt(beta) = {threshold}")]
    InvalidGap { lambda_k: f64, threshold: f64 },

    #[error("matrix is not symmetric (||W - W^T||_F = {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("agent {0} holds no data rows")]
    EmptyBlock(usize),

    #[error("spectrum order violated: {0}")]
    SpectrumOrderViolation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("iteration {t} failed: {source}")]
    StepFailed {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("agent {agent} failed at iteration {t}: {source}")]
    AgentFailed {
        agent: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {origin}, line {line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_step(self, t: usize) -> Self {
        Error::StepFailed {
            t,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_agent(self, agent: usize, t: usize) -> Self {
        Error::AgentFailed {
            agent,
            t,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
