use thiserror::Error;

/// Errors produced by the estimators, the model layer and the harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("dimension {requested} exceeds the {supported} supported Sobol dimensions")]
    DimensionUnsupported { requested: usize, supported: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("eigen solver did not converge after {0} sweeps")]
    NonConvergence(usize),

    #[error("payout {payout} cannot be evaluated on {input} input")]
    PayoutInput { payout: &'static str, input: &'static str },

    #[error("histogram has no positive weight")]
    EmptyEstimate,

    #[error("trial stage produced no positive payout in {0} samples")]
    TrialFailure(usize),

    #[error("weighted trial sample has zero variance in coordinate {0}")]
    DegenerateProposal(usize),

    #[error("time budget {budget}s is below the cost of the smallest run ({smallest}s)")]
    Calibration { budget: f64, smallest: f64 },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Trial-stage failures are counted per run by the harness instead of aborting.
    pub fn is_trial_failure(&self) -> bool {
        matches!(self, Error::TrialFailure(_) | Error::DegenerateProposal(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
