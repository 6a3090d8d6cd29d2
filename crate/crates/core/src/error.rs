//! Error type shared by every numerical routine in the crate.

use thiserror::Error;

/// Failure modes of the library. Each variant has a stable short tag.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("argument outside the supported domain: {0}")]
    DomainError(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("design is not block orthogonal: {0}")]
    NotBlockOrthogonal(String),
    #[error("integral diverges: {0}")]
    IntegralDiverges(String),
    #[error("stationary point outside the unit cube: {0}")]
    OutOfInterior(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("model list is empty")]
    EmptyModelList,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("simulation budget exceeded: {0}")]
    SimulationBudgetExceeded(String),
}

impl Error {
    /// Stable identifier used in machine-readable diagnostics.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::RankDeficient(_) => "RankDeficient",
            Error::DomainError(_) => "DomainError",
            Error::NoConvergence(_) => "NoConvergence",
            Error::NotBlockOrthogonal(_) => "NotBlockOrthogonal",
            Error::IntegralDiverges(_) => "IntegralDiverges",
            Error::OutOfInterior(_) => "OutOfInterior",
            Error::BudgetExceeded(_) => "BudgetExceeded",
            Error::EmptyModelList => "EmptyModelList",
            Error::PreconditionViolated(_) => "PreconditionViolated",
            Error::SimulationBudgetExceeded(_) => "SimulationBudgetExceeded",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::DomainError(msg.into()))
}
