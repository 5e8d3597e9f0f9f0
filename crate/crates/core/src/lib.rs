//! Covariate-dependent Joe-Clayton (BB7) copula models with split-t
//! margins, fitted by Metropolis-Hastings within Gibbs with Bayesian
//! variable selection.
//!
//! The special functions, copula, split-t and link code is generic over
//! [`Real`] (`f32` or `f64`). Posterior, sampler, data and evaluation code
//! work in `f64`.

pub mod copula;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod links;
pub mod mcmc;
pub mod posterior;
pub mod quadrature;
pub mod real;
pub mod settings;
pub mod simulate;
pub mod special;
pub mod split_t;

pub use error::{Error, Result};
pub use real::Real;

pub type TauGrid64 = copula::TauGrid<f64>;
pub type TauGrid32 = copula::TauGrid<f32>;
pub type Copula64 = copula::CopulaNatural<f64>;
pub type Copula32 = copula::CopulaNatural<f32>;
pub type SplitT64 = split_t::SplitTParams<f64>;
pub type SplitT32 = split_t::SplitTParams<f32>;
pub type Link64 = links::Link<f64>;
pub type Link32 = links::Link<f32>;
