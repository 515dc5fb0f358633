use thiserror::Error;

use crate::graph::GraphError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    /// Power iteration stopped at `max_iter`; `last` holds the final iterate.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },
    #[error("partition has {got} labels for a graph of {expected} nodes")]
    Coverage { expected: usize, got: usize },
    #[error("feature length mismatch: expected {expected}, got {got}")]
    FeatureLength { expected: usize, got: usize },
    #[error("training set must contain both classes")]
    SingleClass,
    #[error("score list is empty")]
    EmptyScores,
    #[error("cannot sample {requested} negative pairs from {available} candidates")]
    NegativeUniverse { requested: usize, available: usize },
    #[error("no positive test links in episodes {start}..={end}")]
    NoPositives { start: u32, end: u32 },
    #[error("temporal leak: view before episode {cutoff} exposes a link at episode {episode}")]
    TemporalLeak { cutoff: u32, episode: u32 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
