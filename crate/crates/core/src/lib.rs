//! Short-maturity implied volatility smiles under the rough SABR model.
//!
//! The crate provides
//! - the model parameters, power kernel and forward variance curve ([`kernel_curve`]),
//! - the normalized-smile ODE with its explicit and interpolated solutions ([`smile_ode`]),
//! - the rough SABR formula for whole smiles ([`sabr_formula`]),
//! - Black-Scholes and Bachelier pricing, greeks and implied volatility ([`pricing`]),
//! - a hybrid-scheme Monte Carlo engine for validation ([`mc`]).

pub mod error;
pub mod kernel_curve;
pub mod mc;
pub mod normal;
pub mod pricing;
pub mod quad;
pub mod sabr_formula;
pub mod smile_ode;

pub use error::{Error, PriceBound, Result};
pub use kernel_curve::{
    average_vol_u, kernel_kappa, kernel_ratio_r, BetaSpec, ForwardVarianceCurve, ModelParams,
};
pub use smile_ode::{solve_ode, OdeOptions, OdeSolution, SeriesCoefficients};
