//! Pseudo-Bayes factor toolkit.
//!
//! A pseudo-Bayes factor (PBF) compares two models through the product of
//! their leave-one-out cross-validation predictive densities instead of
//! their marginal likelihoods. This crate implements the estimator in both
//! the forward direction (covariates known) and the inverse direction (the
//! held-out covariate is treated as unknown and carries a data-driven band
//! prior), together with the analytic Kullback-Leibler divergence rates
//! that govern the estimator's exponential convergence, and experiment
//! harnesses that check the convergence claims numerically.
//!
//! Module map:
//! - [`data`]: datasets with replicated responses, model specifications,
//!   parameter vectors, cross-validation reports.
//! - [`likelihood`]: per-observation log densities and log likelihoods for
//!   Poisson, geometric and Gaussian regression models, including the
//!   Gaussian-process prior over latent regression values.
//! - [`sampler`]: additive transformation-based MCMC, importance weighting
//!   and without-replacement resampling, seeded reproducible RNG streams.
//! - [`crossval`]: forward and inverse cross-validation density estimators
//!   and PBF accumulation.
//! - [`prior`]: uniform band priors on held-out covariates for every
//!   supported model/link pairing, with their m-large limit points.
//! - [`rate`]: closed-form divergence rates h and h*, their minimizers,
//!   quadrature over the covariate space, and a derivative-free minimizer.
//! - [`experiment`]: truth-model data generators, convergence studies and
//!   the two model-selection table harnesses.

pub mod crossval;
pub mod data;
pub mod experiment;
pub mod guide;
pub mod likelihood;
pub mod prior;
pub mod rate;
pub mod sampler;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
