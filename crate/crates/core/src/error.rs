use thiserror::Error;

/// Errors raised by map construction, sampling, estimation and reporting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map definition: {0}")]
    InvalidDefinition(String),

    #[error("standing hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("declared topological degree {declared} but counted {numeric} preimages")]
    DegreeMismatch { declared: u64, numeric: u64 },

    #[error("components have a common zero away from the origin")]
    NotHolomorphic,

    #[error("all components vanish at the evaluation point")]
    AllComponentsVanish,

    #[error("root solver residual {residual:e} exceeds tolerance")]
    RootSolverFailure { residual: f64 },

    #[error("preimage solving is not supported for this map: {0}")]
    UnsupportedPreimages(String),

    #[error("seed looks exceptional: {discarded} of {attempted} walks discarded")]
    ExceptionalSeed { discarded: usize, attempted: usize },

    #[error("backward orbit came within {distance:e} of the exceptional set at depth {depth}")]
    OrbitHitsJ { depth: usize, distance: f64 },

    #[error("too many near-critical segments: {discarded} of {total}")]
    TooManyDiscards { discarded: usize, total: usize },

    #[error("not enough samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("orbit too close to the exceptional set (A1 = {a1:e})")]
    OrbitTooCloseToJ { a1: f64 },

    #[error("eps = {eps} is not small compared to chi_1 = {chi1}")]
    EpsTooLarge { eps: f64, chi1: f64 },

    #[error("log u is not integrable along the orbit: {0}")]
    NonIntegrable(String),

    #[error("fewer than 3 radii carry enough mass ({usable} usable)")]
    InsufficientMass { usable: usize },

    #[error("{dropped} of {total} centers dropped for insufficient mass")]
    TooManyDropped { dropped: usize, total: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    StageFailure {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
