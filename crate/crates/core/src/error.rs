use thiserror::Error;

/// Errors produced by the rough SABR library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The smile ODE hit a point where q(y) vanishes or the step size underflowed.
    #[error("singularity: {0}")]
    Singularity(String),

    /// A tabulated or supplied solution violates its invariants.
    #[error("invalid solution: {0}")]
    InvalidSolution(String),

    /// Implied volatility inversion has no solution for the quoted price.
    #[error("no implied volatility: price {price} is {bound}")]
    NoSolution { price: f64, bound: PriceBound },

    /// A covariance matrix could not be factorized, even after jitter retries.
    #[error("covariance decomposition failed for {what} after {retries} jitter retries (last jitter {jitter:e})")]
    Decomposition {
        what: String,
        retries: usize,
        jitter: f64,
    },

    /// The root finder or integrator did not converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which no-arbitrage bound a quoted price violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceBound {
    AtOrBelowIntrinsic,
    AtOrAboveUpper,
}

impl std::fmt::Display for PriceBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PriceBound::AtOrBelowIntrinsic => f.write_str("at or below intrinsic value"),
            PriceBound::AtOrAboveUpper => f.write_str("at or above the upper no-arbitrage bound"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
