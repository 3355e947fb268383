use std::io;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("insufficient data: {what} (need {needed}, have {available})")]
    InsufficientData {
        what: String,
        needed: usize,
        available: usize,
    },

    #[error("invalid evaluator: {0}")]
    InvalidEvaluator(String),

    #[error("mutation score undefined: every mutant is presumed equivalent")]
    UndefinedScore,

    #[error("configuration has {} error(s):\n  {}", .0.len(), .0.join("\n  "))]
    Config(Vec<String>),

    #[error("runner failed: {0}")]
    Runner(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        invalid(format!("{name} must lie in (0, 1), got {value}"))
    }
}

pub(crate) fn check_unit_closed(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        invalid(format!("{name} must lie in [0, 1], got {value}"))
    }
}
