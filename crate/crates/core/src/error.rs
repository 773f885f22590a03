use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RngError {
    #[error("invalid interval [{lo}, {hi})")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("cannot draw from an empty set")]
    EmptySet,
    #[error("standard deviation must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("zero-width normal at {mu} lies outside [{lo}, {hi}]")]
    DegenerateTruncation { mu: f64, lo: f64, hi: f64 },
    #[error("truncated normal exceeded {limit} rejections")]
    RejectionLimit { limit: usize },
    #[error("pool size must be at least one draw")]
    EmptyPool,
    #[error("could not allocate a pool of {draws} draws")]
    Allocation { draws: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BisectionError {
    #[error("invalid bracket [{lower}, {upper}]")]
    InvalidBracket { lower: f64, upper: f64 },
    #[error("no sign change on [{lower}, {upper}]: f(lower)={f_lower}, f(upper)={f_upper}")]
    NoSignChange { lower: f64, upper: f64, f_lower: f64, f_upper: f64 },
    #[error("no convergence after {iterations} iterations (last |f|={residual})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("non-finite mismatch {value} at candidate {at}")]
    NonFinite { at: f64, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample variance is zero")]
    ZeroVariance,
    #[error("price {0} is not positive")]
    NonPositivePrice(f64),
    #[error("group assignment does not partition the agents: {0}")]
    InvalidPartition(String),
}

/// Errors raised while assembling or running a model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("excess demand requires at least one agent")]
    NoAgents,
    #[error(transparent)]
    Rng(#[from] RngError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("price bisection failed: {0}")]
    Bisection(#[from] BisectionError),
    #[error("non-finite {quantity} ({value})")]
    NonFinite { quantity: &'static str, value: f64 },
    #[error("non-positive price {0}")]
    NonPositivePrice(f64),
    #[error("utility argument {0} is not positive")]
    UtilityDomain(f64),
    #[error("first-order condition has a vanishing denominator")]
    VanishingDenominator,
    #[error("wealth became non-positive ({0})")]
    NonPositiveWealth(f64),
    #[error("{class} agents cannot take part in a rational (bisection) market")]
    NotBisectionCapable { class: &'static str },
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output error: {0}")]
    Output(String),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::Step { .. } => e,
            e => Error::Step { step, source: Box::new(e) },
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn finite(quantity: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { quantity, value })
    }
}
