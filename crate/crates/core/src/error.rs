use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input sequence is empty")]
    EmptyInput,

    #[error("total weight collapse: every log-weight is -inf")]
    WeightCollapse,

    #[error("total weight collapse at step {step}")]
    CollapseAt { step: usize },

    #[error("backward weights collapsed at step {step}")]
    BackwardCollapse { step: usize },

    #[error("non-finite state at index {index}")]
    NonFiniteState { index: usize },

    #[error("step {step} is beyond the horizon {horizon}")]
    StepOutOfRange { step: usize, horizon: usize },

    #[error("trajectory has {len} states, expected {expected}")]
    LengthMismatch { len: usize, expected: usize },

    #[error("invalid simplex: {0}")]
    InvalidSimplex(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("path-density cache mismatch: {0}")]
    CacheMismatch(String),

    #[error("series is constant, autocorrelation is undefined")]
    ConstantSeries,

    #[error("series has {len} points, at least {min} required")]
    SeriesTooShort { len: usize, min: usize },

    #[error("parameter lies outside the prior support")]
    OutsideSupport,
}
