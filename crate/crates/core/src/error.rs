use thiserror::Error;

/// Errors raised by the model, the integrators and the estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} is outside the admissible range: {reason}")]
    InvalidTime { t: f64, reason: String },

    #[error("expected {expected} barrier levels, got {got}")]
    BarrierCount { expected: usize, got: usize },

    #[error("nesting depth {depth} exceeds the supported maximum of {max}")]
    DepthExceeded { depth: usize, max: usize },

    #[error("{regimes} barrier regimes are not supported: {reason}")]
    UnsupportedRegimes { regimes: usize, reason: String },

    #[error("observation dates do not contain adjustment time {0}")]
    MissingAdjustmentObservation(f64),

    #[error("survival-to-date probability {0:e} is below the floor; the information state is almost impossible under the model")]
    ImprobableInformation(f64),

    #[error("conditioning event too rare: accepted {accepted} of {drawn} draws")]
    ConditioningTooRare { accepted: usize, drawn: usize },

    #[error("probability {0} is outside [0, 1]")]
    ProbabilityRange(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
