use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("non-finite observation at index {index}")]
    NonFinite { index: usize },

    #[error("quantile level out of range: {0}")]
    QuantileLevel(f64),

    #[error("need ≥ 2 observations to initialize variance (got {0})")]
    TooFewObservations(usize),

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("Bahadur limit undefined: zero density at quantile")]
    ZeroDensity,

    #[error("insufficient draws for requested level: have {have}, need at least {need}")]
    InsufficientDraws { have: usize, need: usize },

    #[error("two-sample test function `{0}` requires a reference sample")]
    MissingReference(&'static str),

    #[error("quadrature did not converge: coarse {coarse:e}, refined {refined:e}, tolerance {tol:e}")]
    Quadrature { coarse: f64, refined: f64, tol: f64 },

    #[error("maximum likelihood failed at every start: {0}")]
    MleFailed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
