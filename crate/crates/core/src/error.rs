use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("missing parameter `{0}`")]
    MissingParameter(&'static str),

    #[error("cannot normalize a vector with no positive mass")]
    ZeroVector,

    #[error("not a probability vector: {0}")]
    NotProbVector(String),

    #[error("not a stochastic matrix: {0}")]
    NotStochastic(String),

    #[error("active-user count {n} exceeds population {users}")]
    UserCountOutOfRange { n: usize, users: usize },

    #[error("decoder state {0} is not valid here: {1}")]
    InvalidState(String, &'static str),

    #[error("unreachable decoder configuration: {0}")]
    Unreachable(String),

    #[error("balance equations of chain {chain} are singular or ill-conditioned")]
    SingularChain { chain: String },

    #[error("residual {residual:e} of {what} exceeds tolerance {tolerance:e}")]
    Residual {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("peak AoI is undefined: {0}")]
    NoSuccess(&'static str),

    #[error("oracle instance too large: n = {n}, d_max = {max_cp_len}")]
    OracleTooLarge { n: usize, max_cp_len: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularChain { .. }
                | Error::Residual { .. }
                | Error::Unreachable(_)
                | Error::Internal(_)
                | Error::NotProbVector(_)
                | Error::NotStochastic(_)
                | Error::NoSuccess(_)
        )
    }
}
