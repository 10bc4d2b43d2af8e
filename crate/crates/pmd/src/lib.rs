//! Particle mirror descent for approximate Bayesian posterior inference.
//!
//! The solver treats posterior inference as stochastic mirror descent over the
//! space of densities: each data observation contributes a noisy functional
//! gradient, and the entropy prox-mapping turns the update into a
//! multiplicative reweighting that a finite particle system can carry exactly.
//! Two interchangeable strategies realize the iteration — reweighting a fixed
//! prior-drawn support, and resampling through a weighted kernel density
//! estimate — alongside a stochastic-gradient Langevin dynamics baseline and
//! grid-based diagnostics for measuring posterior quality.

pub mod density;
pub mod diagnostics;
pub mod error;
pub mod mirror_descent;
pub mod model;
pub mod schedule;
pub mod sgld;
pub mod trace;

pub use density::{
    effective_sample_size, log_sum_exp, median_pairwise_distance, normalize_log_weights,
    BandwidthRule, KdeDensity, ParticleCloud,
};
pub use error::{Error, Result};
