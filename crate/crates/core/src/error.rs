use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants are grouped so that front ends can map them onto exit codes:
/// configuration problems are the caller's fault, numerical problems are
/// failures of a solver or sampler on otherwise valid input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported moment order `{0}` (expected one of 0, z, zz)")]
    UnsupportedOrder(String),

    #[error("quadrature did not converge: {nodes} nodes, last change {change:e}")]
    Quadrature { nodes: usize, change: f64 },

    #[error("rate envelope violated at t={t}: rate {rate} exceeds bound {bound}")]
    EnvelopeViolation { t: f64, rate: f64, bound: f64 },

    #[error("{what}={value} outside of [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors caused by invalid input rather than solver breakdown.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidMeasure(_) | Error::Config(_) | Error::UnsupportedOrder(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
