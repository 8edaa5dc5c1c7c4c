use thiserror::Error;

use crate::orbit::SatIndex;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("satellite index out of range: {0}")]
    Index(String),
    #[error("degenerate pair: {0} is both transmitter and sink")]
    DegeneratePair(SatIndex),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pulse model: {0}")]
    Pulse(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("DoF allocation: {0}")]
    Allocation(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("search space has {candidates} candidates, above the gate of {limit}; enable exhaustive search explicitly")]
    CostGate { candidates: u128, limit: u128 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
