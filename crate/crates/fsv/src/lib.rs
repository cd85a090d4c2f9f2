//! Bayesian estimation of multivariate factor stochastic volatility models.
//!
//! Observed returns are decomposed into a small number of latent factors with
//! time-varying variances plus idiosyncratic noise whose log-variances follow
//! independent AR(1) processes. Inference runs a full conditional Gibbs
//! sampler whose mixing can be boosted by interweaving moves that resample
//! the loadings-column scales in alternative parameterizations of the model
//! (see [`interweave`]).
//!
//! The crate is organized around:
//!
//! * [`model`] — model types, synthetic-data simulation, covariance
//!   reconstruction;
//! * [`gig`] — Generalized Inverse Gaussian sampling and density evaluation;
//! * [`sv`] — the univariate stochastic volatility update used as a plug-in
//!   for each latent log-variance series;
//! * [`gibbs`] — the full sampler (loadings rows, factors, orchestration,
//!   draw storage);
//! * [`interweave`] — the boosting strategies, registered by name and
//!   selected at runtime;
//! * [`diag`] — autocorrelations, inefficiency factors, sign identification,
//!   posterior summaries.

pub mod diag;
pub mod error;
pub mod gibbs;
pub mod gig;
pub mod interweave;
pub mod math;
pub mod model;
pub mod rng;
pub mod sv;

pub use error::FsvError;
pub use model::{FsvParams, LatentState, ModelDims, PriorConfig, RestrictionPattern, SvParams};

/// Crate result alias.
pub type Result<T> = std::result::Result<T, FsvError>;
