use thiserror::Error;

use crate::simdet::SimulationFailure;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("guard exceeded: {0}")]
    Guard(String),

    /// Conditioning on an event that no support element satisfies.
    #[error("conditioning on an empty event: {0}")]
    EmptyEvent(String),

    #[error("zero-probability conditioning event: {0}")]
    ZeroProbability(String),

    #[error("empty fiber for z = {0}")]
    EmptyFiber(String),

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("simulation failed at step {}: {}", .0.step, .0.reason)]
    Simulation(Box<SimulationFailure>),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::InvalidInput(msg.into()))
}
