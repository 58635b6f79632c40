use thiserror::Error;

/// Errors surfaced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    /// The goal cannot be reached from the start on the inflated grid.
    #[error("goal unreachable: start region holds {region_size} free cells")]
    UnreachableGoal { region_size: usize },

    #[error("planner endpoint {which} at ({x:.3}, {y:.3}) is not in a free cell")]
    BlockedEndpoint { which: &'static str, x: f64, y: f64 },

    #[error("out-of-order command timestamp {got} (latest {latest})")]
    Ordering { got: f64, latest: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
