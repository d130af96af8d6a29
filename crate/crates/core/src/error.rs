use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The squared distance reached `r² + Q`, where the potential has a pole.
    #[error("distance {dist} outside potential domain [0, {limit})")]
    PotentialDomain { dist: f64, limit: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("non-monotone timestamp {t} (last recorded {last})")]
    NonMonotoneTimestamp { t: f64, last: f64 },

    #[error("history does not cover time {t} (covered [{start}, {end}])")]
    UncoveredLookback { t: f64, start: f64, end: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("gain check failed: {0}")]
    GainCheck(String),

    #[error("csv: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
