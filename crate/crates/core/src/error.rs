use thiserror::Error;

/// Errors produced by model construction, analysis and sampling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A covariance that must be symmetric positive definite is not.
    #[error("nonsingularity violated: {0}")]
    NotSpd(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range (valid: {valid})")]
    IndexOutOfRange { index: usize, valid: String },

    /// The endpoint prediction covariance C_{N|k} could not be factored.
    #[error("propagated covariance C_N|{k} is numerically singular")]
    SingularPropagatedCovariance { k: usize },

    #[error("covariance is not conditionally Markov with respect to index {c}: {reason}")]
    NotConditionallyMarkov { c: usize, reason: String },

    #[error("numerical inconsistency: {0}")]
    Numerical(String),
}

impl Error {
    /// Short machine-readable tag, used by the command-line error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NotSpd(_) => "not_spd",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::SingularPropagatedCovariance { .. } => "singular_propagated_covariance",
            Error::NotConditionallyMarkov { .. } => "not_conditionally_markov",
            Error::Numerical(_) => "numerical",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
