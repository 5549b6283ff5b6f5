use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error(
        "fit did not converge after {iterations} iterations \
         (gradient norm {grad_norm:.3e}, worst constraint residual {max_residual:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        max_residual: f64,
    },

    #[error("degenerate null model: {0}")]
    Degenerate(String),

    #[error("statistic undefined under this null: every block variance is zero")]
    StatisticUndefined,

    #[error("sampled replica {replica} had zero edges after {attempts} redraws")]
    EmptyReplica { replica: usize, attempts: usize },

    #[error("invalid block matrix: {0}")]
    BlockMatrix(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
