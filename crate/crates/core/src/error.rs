use thiserror::Error;

/// Errors raised by model construction, simulation and the backward solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Validation { what: String, reason: String },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("basis was built for a different Lévy measure")]
    BasisMismatch,

    #[error("regression lost rank at node {node}")]
    RankLoss { node: usize },

    #[error("non-finite value at node {node} ({quantity})")]
    NonFinite { node: usize, quantity: &'static str },

    #[error("fixed point did not converge after {iterations} iterations (ratios {ratios:?})")]
    NoConvergence { iterations: usize, ratios: Vec<f64> },

    #[error("at (t={t}, x={x}): {source}")]
    AtGridPoint {
        t: f64,
        x: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            what: what.into(),
            reason: reason.into(),
        }
    }

    /// True for errors that come from bad inputs rather than a failed solve.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation { .. }
            | Error::IndexOutOfRange { .. }
            | Error::BasisMismatch
            | Error::GridTooCoarse(_) => true,
            Error::AtGridPoint { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
