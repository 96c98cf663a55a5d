use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {msg}")]
    Bundle {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("query budget exhausted: {used} used of {limit}, batch of {requested} rejected")]
    BudgetExhausted {
        used: usize,
        limit: usize,
        requested: usize,
    },

    #[error("degenerate budget: multiplier {multiplier} on {test_size} test nodes yields zero queries")]
    DegenerateBudget { multiplier: f64, test_size: usize },

    #[error("{kind} defense failed (seed {seed}): {msg}")]
    Defense {
        kind: String,
        seed: u64,
        msg: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn bundle(file: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Bundle {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }
}
