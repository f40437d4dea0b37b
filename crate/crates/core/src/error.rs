//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Estimated channel magnitude below the inversion floor; the caller is
    /// expected to skip this user for the round.
    #[error("deep fade: |h|={magnitude:.3e} at or below floor {floor:.3e}")]
    DeepFade { magnitude: f64, floor: f64 },

    /// Even one local step would exceed the transmit power budget.
    #[error("power budget infeasible: worst-case {required:.3e} W exceeds budget {budget:.3e} W")]
    PowerInfeasible { required: f64, budget: f64 },

    /// A numeric quantity became non-finite.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Experiment configuration failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// IDX dataset file could not be parsed.
    #[error("idx parse error at byte {offset}: {reason}")]
    IdxParse { offset: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for the two per-user conditions that mean "sit this round out"
    /// rather than "abort the experiment".
    pub fn is_round_skip(&self) -> bool {
        matches!(self, Error::DeepFade { .. } | Error::PowerInfeasible { .. })
    }
}
