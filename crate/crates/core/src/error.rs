use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("unknown fuel class code {code} at row {row}, col {col}")]
    UnknownFuelCode { code: i64, row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: u32 },

    #[error("time {t} min is beyond the weather horizon of {horizon} min")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("configuration error: zero-reactance loop makes the island containing bus {bus} singular")]
    SingularIsland { bus: u32 },

    #[error("{0} lies outside the landscape")]
    OutsideLandscape(String),

    #[error("budget exceeded: plan uses {used} actions, budget is {budget}")]
    BudgetExceeded { used: usize, budget: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("step {step} (t = {t_min} min): {source}")]
    Step {
        step: usize,
        t_min: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by invalid inputs rather than failures during a run.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } => false,
            Error::Step { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
