use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown community `{0}`")]
    UnknownCommunity(String),

    #[error("zero variance in `{0}`")]
    ZeroVariance(String),

    #[error("coordinate descent did not converge after {sweeps} sweeps (max change {max_change:.3e})")]
    NonConvergence { sweeps: usize, max_change: f64 },

    #[error("design matrix is rank deficient; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("simulation diverged at t={time}: {detail}")]
    Divergent { time: usize, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures that originate in the numerical routines rather than in the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::RankDeficient { .. }
                | Error::Divergent { .. }
                | Error::Numerical(_)
                | Error::ZeroVariance(_)
                | Error::Invariant(_)
        )
    }
}
