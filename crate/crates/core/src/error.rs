use thiserror::Error;

use crate::cns_model::FlowState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// `1 + a <= 0` somewhere on the grid.
    #[error("vacuum: min(1 + a) = {min:e}")]
    Vacuum { min: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        snapshot: Box<FlowState>,
    },

    #[error(transparent)]
    ConfigFile(#[from] crate::io::config::ConfigError),

    #[error(transparent)]
    Checkpoint(#[from] crate::io::checkpoint::CheckpointError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
