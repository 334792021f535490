use thiserror::Error;

/// Errors raised by the simulator, the learner and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario placement failed: could only place {placed} of {requested} sensors with spacing {spacing} m")]
    Placement {
        placed: usize,
        requested: usize,
        spacing: f64,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("forward cache does not belong to the current parameters")]
    StaleCache,

    #[error("replay buffer holds {len} transitions, batch of {batch} requested")]
    Underfull { len: usize, batch: usize },

    #[error("environment episode already finished")]
    EpisodeDone,

    #[error("training diverged at episode {episode}, step {step}: {detail}")]
    Diverged {
        episode: usize,
        step: usize,
        detail: String,
    },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
