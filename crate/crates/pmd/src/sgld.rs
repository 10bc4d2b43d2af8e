//! Stochastic-gradient Langevin dynamics baseline.
//!
//! A single chain driven by minibatch gradient estimates plus injected
//! Gaussian noise: `θ' = θ + (ε_t/2)·[∇log p(θ) + (N/|B|)·Σ_B ∇log p(x|θ)]
//! + √ε_t · z`. Kept post-burn-in samples form an equal-weight particle
//! cloud so the baseline plugs into the same diagnostics as the
//! mirror-descent strategies.

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::ParticleCloud;
use crate::error::{Error, Result};
use crate::mirror_descent::{stream_rng, BatchSampler, DiagnosticFn, MinibatchMode, RunResult};
use crate::model::{Dataset, Model};
use crate::trace::{default_record_iterations, DensityState, InferenceTrace, TraceRecord};

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgldConfig {
    /// Step size `ε_t = a·(b+t)^{-κ}`.
    pub step_a: f64,
    pub step_b: f64,
    /// Decay exponent `κ`; must lie in `(1/2, 1]` so that `Σε_t` diverges
    /// while `Σε_t²` stays finite.
    pub step_kappa: f64,
    #[serde(default = "one")]
    pub batch_size: usize,
    #[serde(default)]
    pub minibatch: MinibatchMode,
    pub iterations: usize,
    /// Iterations discarded before samples are kept.
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in sample.
    #[serde(default = "one")]
    pub thin: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub record_iterations: Option<Vec<usize>>,
}

impl SgldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_a > 0.0) || !(self.step_b >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step sizes need a > 0 and b >= 0, got a={}, b={}",
                self.step_a, self.step_b
            )));
        }
        if !(self.step_kappa > 0.5 && self.step_kappa <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa must lie in (0.5, 1], got {}",
                self.step_kappa
            )));
        }
        if self.batch_size == 0 || self.thin == 0 || self.iterations == 0 {
            return Err(Error::InvalidParameter(
                "batch_size, thin, and iterations must be >= 1".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn_in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if let Some(rs) = &self.record_iterations {
            if rs.windows(2).any(|w| w[0] >= w[1])
                || rs.iter().any(|t| *t == 0 || *t > self.iterations)
            {
                return Err(Error::InvalidParameter(format!(
                    "record_iterations must be strictly increasing within 1..={}",
                    self.iterations
                )));
            }
        }
        Ok(())
    }

    pub fn step_size(&self, t: usize) -> f64 {
        self.step_a * (self.step_b + t as f64).powf(-self.step_kappa)
    }
}

/// Unbiased drift estimate `∇log p(θ) + (N/|B|)·Σ_B ∇log p(x_i|θ)`.
pub fn sgld_drift(
    model: &dyn Model,
    data: &Dataset,
    batch: &[usize],
    theta: &[f64],
) -> Result<Array1<f64>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    let mut drift = model.grad_log_prior(theta)?;
    let mut lik = Array1::zeros(theta.len());
    for &i in batch {
        lik += &model.grad_log_likelihood(theta, data.row(i))?;
    }
    let scale = data.len() as f64 / batch.len() as f64;
    drift.scaled_add(scale, &lik);
    Ok(drift)
}

/// In-place Langevin update `θ += (ε/2)·drift + √ε·z` with standard normal `z`.
fn langevin_update(theta: &mut Array1<f64>, drift: &Array1<f64>, eps: f64, rng: &mut dyn RngCore) {
    debug_assert!(eps >= 0.0);
    let noise = eps.sqrt();
    for j in 0..theta.len() {
        let z: f64 = StandardNormal.sample(&mut *rng);
        theta[j] += 0.5 * eps * drift[j] + noise * z;
    }
}

/// One Langevin transition: estimate the drift on `batch`, then return
/// `θ + (ε/2)·drift + √ε·z`. A zero step size returns `θ` unchanged.
pub fn sgld_step(
    theta: &Array1<f64>,
    model: &dyn Model,
    data: &Dataset,
    batch: &[usize],
    eps: f64,
    rng: &mut dyn RngCore,
) -> Result<Array1<f64>> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "step size must be nonnegative and finite, got {eps}"
        )));
    }
    let drift = sgld_drift(model, data, batch, theta.as_slice().expect("contiguous"))?;
    let mut next = theta.clone();
    langevin_update(&mut next, &drift, eps, rng);
    Ok(next)
}

/// Run the chain. The trace's `gamma` column carries the Langevin step size
/// `ε_t`; `m` and `ess` count the kept samples (the chain position alone
/// before anything is kept).
pub fn run_sgld(
    model: &dyn Model,
    data: &Dataset,
    config: &SgldConfig,
    diagnostics: Option<&DiagnosticFn<'_>>,
) -> Result<RunResult> {
    config.validate()?;
    model.check_data(data)?;
    if config.batch_size > data.len() {
        return Err(Error::ConfigMismatch(format!(
            "batch_size {} exceeds the dataset size {}",
            config.batch_size,
            data.len()
        )));
    }
    let start = Instant::now();
    let d = model.dim();
    let seed = config.rng_seed;

    let record_set: BTreeSet<usize> = config
        .record_iterations
        .clone()
        .unwrap_or_else(|| default_record_iterations(config.iterations))
        .into_iter()
        .collect();

    let init = model.sample_prior(&mut stream_rng(seed, 0), 1);
    let mut theta: Array1<f64> = init.row(0).to_owned();
    let mut kept: Vec<f64> = Vec::new();
    let mut kept_count = 0usize;

    let mut sampler = BatchSampler::new(data.len(), config.minibatch);
    let mut trace = InferenceTrace::default();
    let mut data_visited = 0usize;

    let snapshot = |theta: &Array1<f64>, kept: &[f64], kept_count: usize| -> Result<DensityState> {
        let cloud = if kept_count == 0 {
            ParticleCloud::uniform(
                Array2::from_shape_vec((1, d), theta.to_vec()).expect("shape"),
            )?
        } else {
            ParticleCloud::uniform(
                Array2::from_shape_vec((kept_count, d), kept.to_vec()).expect("shape"),
            )?
        };
        Ok(DensityState::Particles(cloud))
    };

    for t in 1..=config.iterations {
        let mut rng = stream_rng(seed, t as u64);
        let eps = config.step_size(t);
        let batch = sampler.next_batch(&mut rng, config.batch_size);
        data_visited += batch.len();

        let theta_slice = theta.as_slice().expect("contiguous").to_vec();
        let drift = sgld_drift(model, data, &batch, &theta_slice)?;
        langevin_update(&mut theta, &drift, eps, &mut rng);

        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "chain diverged at iteration {t}; reduce the step size"
            )));
        }

        if t > config.burn_in && (t - config.burn_in) % config.thin == 0 {
            kept.extend(theta.iter());
            kept_count += 1;
        }

        if record_set.contains(&t) {
            let state = snapshot(&theta, &kept, kept_count)?;
            let metrics = diagnostics.map(|f| f(t, &state)).unwrap_or_default();
            let m = kept_count.max(1);
            trace.push(TraceRecord {
                t,
                gamma: eps,
                m,
                ess: m as f64,
                data_visited,
                metrics,
                wall_secs: start.elapsed().as_secs_f64(),
                state: Some(state),
            });
        }
    }

    Ok(RunResult {
        density: snapshot(&theta, &kept, kept_count)?,
        trace,
    })
}
