//! The particle mirror-descent iteration.
//!
//! Each iteration applies the entropy prox-mapping to a stochastic functional
//! gradient built from one minibatch: the updated density is proportional to
//! `q_t^{1-γ_t} · p^{γ_t} · exp(γ_t · L̂)` where `L̂` is the minibatch
//! estimate of the full-data log-likelihood. Two finite-dimensional
//! realizations are provided, selected by [`Strategy`]:
//!
//! * reweighting a fixed support drawn once from the prior, where the prior
//!   factor cancels and the update touches only the weights; and
//! * resampling through a weighted kernel estimate, where a fresh support is
//!   drawn from the current smoothed density each iteration and weighted by
//!   the exact prox integrand over that proposal.
//!
//! `SwitchAt` runs the kernel strategy first and then freezes its state into
//! a fixed support: once the smoothed iterate sits near the posterior, a
//! sample from it is a far better support than fresh prior draws, and the
//! cheap reweighting strategy can finish the job.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use ndarray::{Array1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::density::{BandwidthRule, KdeDensity, ParticleCloud};
use crate::error::{Error, Result};
use crate::model::{Dataset, Model};
use crate::schedule::{ParticleSchedule, StepSchedule};
use crate::trace::{default_record_iterations, DensityState, InferenceTrace, TraceRecord};

/// How the density iterate is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Strategy {
    /// Weighted particles on a fixed prior-drawn support.
    WeightedParticles,
    /// Weighted kernel density estimate, resampled every iteration.
    WeightedKde,
    /// Kernel estimate for `t < t_switch`; at `t_switch` the scheduled
    /// particle count is sampled from the KDE as a new fixed support and
    /// only the weights update from there on.
    SwitchAt { t_switch: usize },
}

/// Minibatch selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinibatchMode {
    /// Uniform i.i.d. draws with replacement each iteration.
    #[default]
    Replacement,
    /// Shuffled passes over the data; batches may straddle epoch boundaries.
    Epochs,
}

/// Bandwidth configuration for the kernel phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BandwidthSpec {
    /// `h = scale · m^{-1/(d+2β)}` with an explicit scale and unit kernel
    /// scales in every dimension.
    Fixed { beta: f64, scale: f64 },
    /// Resolve the scale with the median trick against the current cloud:
    /// coordinates are standardized by the cloud's weighted std, and the
    /// bandwidth is `factor`× the weighted median pairwise distance. Inside
    /// [`run_pmd`] kernel phases this is re-resolved every iteration, so the
    /// kernel tracks the iterate as it contracts from prior to posterior;
    /// [`smooth_cloud`] resolves it once against the given cloud.
    ///
    /// Because the kernel width is proportional to the cloud's own spread,
    /// each resampling step inflates variance by the factor `1 + (f·med)²`
    /// in standardized units; the step size must stay above that rate for
    /// the prox tilt to shed it, which bounds how large `factor` can be on
    /// long runs.
    MedianTrick {
        beta: f64,
        #[serde(default = "default_trick_factor")]
        factor: f64,
    },
    /// The median trick anchored at an arbitrary weighted quantile of the
    /// pairwise distances instead of the median. Once a multimodal iterate
    /// has split into tight clusters, the median pair straddles the
    /// between-cluster gap and tracks mode separation rather than mode
    /// width; a lower quantile (0.2–0.3) stays inside the within-cluster
    /// pair population, so late kernels resolve individual modes while
    /// early kernels still see the full cloud spread.
    PairwiseQuantile { beta: f64, quantile: f64, factor: f64 },
}

fn default_trick_factor() -> f64 {
    0.1
}

fn default_bandwidth() -> BandwidthSpec {
    BandwidthSpec::MedianTrick {
        beta: 2.0,
        factor: default_trick_factor(),
    }
}

fn default_batch_size() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmdConfig {
    pub strategy: Strategy,
    pub step: StepSchedule,
    pub particles: ParticleSchedule,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub minibatch: MinibatchMode,
    pub iterations: usize,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: BandwidthSpec,
    pub rng_seed: u64,
    /// Iterations at which diagnostics are recorded; defaults to powers of
    /// two plus the final iteration.
    #[serde(default)]
    pub record_iterations: Option<Vec<usize>>,
}

impl PmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        self.step.validate()?;
        self.particles.validate()?;
        match self.bandwidth {
            BandwidthSpec::Fixed { beta, scale } => {
                BandwidthRule::new(beta, scale)?;
            }
            BandwidthSpec::MedianTrick { beta, factor } => {
                if !(beta > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "bandwidth beta must be positive, got {beta}"
                    )));
                }
                if !(factor > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "median-trick factor must be positive, got {factor}"
                    )));
                }
            }
            BandwidthSpec::PairwiseQuantile { beta, quantile, factor } => {
                if !(beta > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "bandwidth beta must be positive, got {beta}"
                    )));
                }
                if !(quantile > 0.0 && quantile < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "pairwise quantile must lie in (0, 1), got {quantile}"
                    )));
                }
                if !(factor > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "pairwise-quantile factor must be positive, got {factor}"
                    )));
                }
            }
        }
        match self.strategy {
            Strategy::WeightedParticles => {
                if !matches!(self.particles, ParticleSchedule::Fixed { .. }) {
                    return Err(Error::ConfigMismatch(
                        "the weighted-particles strategy keeps a fixed support; use a fixed particle schedule"
                            .into(),
                    ));
                }
            }
            Strategy::SwitchAt { t_switch } => {
                if t_switch == 0 || t_switch > self.iterations {
                    return Err(Error::ConfigMismatch(format!(
                        "t_switch must lie in 1..={}, got {t_switch}",
                        self.iterations
                    )));
                }
            }
            Strategy::WeightedKde => {}
        }
        if let Some(rs) = &self.record_iterations {
            if rs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(
                    "record_iterations must be strictly increasing".into(),
                ));
            }
            if rs.iter().any(|t| *t == 0 || *t > self.iterations) {
                return Err(Error::InvalidParameter(format!(
                    "record_iterations must lie in 1..={}",
                    self.iterations
                )));
            }
        }
        Ok(())
    }
}

/// Independent ChaCha substream: same key for the whole run, one stream per
/// iteration, so traces are reproducible regardless of how much randomness
/// any single iteration consumes.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_batch(data: &Dataset, batch: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    if let Some(i) = batch.iter().find(|i| **i >= data.len()) {
        return Err(Error::InvalidArgument(format!(
            "minibatch index {i} out of range for {} rows",
            data.len()
        )));
    }
    Ok(())
}

/// Minibatch estimate of the full-data log-likelihood of `theta`:
/// `(N/|B|) · Σ_{i∈B} log p(x_i | θ)`, unbiased for `Σ_n log p(x_n | θ)`
/// under uniform batches. A batch holding every row once recovers the exact
/// sum.
pub fn minibatch_log_lik(
    model: &dyn Model,
    data: &Dataset,
    batch: &[usize],
    theta: &[f64],
) -> f64 {
    debug_assert!(!batch.is_empty());
    let sum: f64 = batch
        .iter()
        .map(|&i| model.log_likelihood(theta, data.row(i)))
        .sum();
    data.len() as f64 / batch.len() as f64 * sum
}

/// `c * v` treating a zero coefficient as exactly zero even when `v = -inf`,
/// so a full step (γ = 1) discards the old weights instead of producing NaN.
fn scaled_log_term(c: f64, v: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * v
    }
}

/// Entropy prox-mapping on a fixed support: `α_i ← α_i^{1-γ} e^{γ g_i}`
/// followed by normalization, where `g_i = minibatch_log_lik(θ_i)`.
///
/// The support is drawn from the prior once, so the `p^γ / q_t^γ` prior and
/// density factors of the exact prox cancel against the weights already
/// accumulated — only the likelihood term enters. `γ = 0` is the identity.
pub fn reweight_particles(
    cloud: &ParticleCloud,
    model: &dyn Model,
    data: &Dataset,
    batch: &[usize],
    gamma: f64,
) -> Result<ParticleCloud> {
    if !(gamma >= 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    check_batch(data, batch)?;
    if gamma == 0.0 {
        return Ok(cloud.clone());
    }
    let logw: Array1<f64> = (0..cloud.len())
        .map(|i| {
            let g = minibatch_log_lik(model, data, batch, cloud.point(i));
            scaled_log_term(1.0 - gamma, cloud.log_weights()[i]) + gamma * g
        })
        .collect();
    ParticleCloud::new(cloud.points().to_owned(), logw)
}

/// One prox step through the smoothed density: draw `m_next` proposals from
/// `current`, weight each by the exact prox integrand over that proposal,
/// `q̃^{-γ} · p^{γ} · exp(γ · minibatch_log_lik)`, and smooth with bandwidth
/// `h_next`. `γ = 0` resamples the current density with uniform weights.
#[allow(clippy::too_many_arguments)]
pub fn kde_prox_step(
    current: &KdeDensity,
    model: &dyn Model,
    data: &Dataset,
    batch: &[usize],
    gamma: f64,
    m_next: usize,
    h_next: f64,
    rng: &mut dyn RngCore,
) -> Result<KdeDensity> {
    if !(gamma >= 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    if m_next == 0 {
        return Err(Error::InvalidParameter("m_next must be >= 1".into()));
    }
    if !(h_next > 0.0) || !h_next.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive and finite, got {h_next}"
        )));
    }
    check_batch(data, batch)?;
    let samples = current.sample(rng, m_next);
    let logw = if gamma == 0.0 {
        Array1::zeros(m_next)
    } else {
        let mut logw = Array1::zeros(m_next);
        for i in 0..m_next {
            let theta = samples.row(i).to_slice().expect("standard layout row");
            let lq = current.log_density(theta);
            let lp = model.log_prior(theta);
            let ll = minibatch_log_lik(model, data, batch, theta);
            logw[i] = gamma * (lp - lq + ll);
        }
        logw
    };
    KdeDensity::with_scales(samples, logw, h_next, current.scales().to_owned())
}

/// Weighted `q`-quantile of pairwise Euclidean distances, pair `(i,j)`
/// carrying mass `w_i w_j`. Falls back to the unweighted quantile when the
/// weights carry no mass across distinct pairs.
fn weighted_quantile_pairwise_distance(
    points: ArrayView2<'_, f64>,
    weights: &Array1<f64>,
    q: f64,
) -> f64 {
    const CAP: usize = 512;
    let m = points.nrows();
    if m < 2 {
        return 0.0;
    }
    let stride = m.div_ceil(CAP);
    let idx: Vec<usize> = (0..m).step_by(stride).collect();
    let mut pairs = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[(a + 1)..] {
            let d2: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            pairs.push((d2.sqrt(), weights[i] * weights[j]));
        }
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if total <= 0.0 {
        let k = ((pairs.len() as f64 * q) as usize).min(pairs.len() - 1);
        return pairs[k].0;
    }
    let mut acc = 0.0;
    for (dist, w) in &pairs {
        acc += w;
        if acc >= q * total {
            return *dist;
        }
    }
    pairs.last().expect("nonempty").0
}

/// Resolve the bandwidth rule and per-dimension kernel scales for a kernel
/// phase starting from `cloud`.
fn kde_setup_from(
    cloud: &ParticleCloud,
    spec: &BandwidthSpec,
    d: usize,
) -> Result<(BandwidthRule, Array1<f64>)> {
    match spec {
        BandwidthSpec::Fixed { beta, scale } => {
            Ok((BandwidthRule::new(*beta, *scale)?, Array1::ones(d)))
        }
        BandwidthSpec::MedianTrick { beta, factor }
        | BandwidthSpec::PairwiseQuantile { beta, factor, .. } => {
            let q = match spec {
                BandwidthSpec::PairwiseQuantile { quantile, .. } => *quantile,
                _ => 0.5,
            };
            let std = cloud.weighted_std();
            let max_std = std.iter().cloned().fold(0.0, f64::max);
            let floor = (1e-8 * max_std).max(1e-12);
            let scales = std.mapv(|s| s.max(floor));
            let mut standardized = cloud.points().to_owned();
            for j in 0..d {
                standardized.column_mut(j).mapv_inplace(|v| v / scales[j]);
            }
            let dist =
                weighted_quantile_pairwise_distance(standardized.view(), &cloud.weights(), q);
            let h1 = (factor * dist).max(1e-6);
            Ok((BandwidthRule::anchored(*beta, h1, cloud.len(), d)?, scales))
        }
    }
}

/// Smooth a weighted cloud into a kernel estimate, resolving `spec` against
/// the cloud itself (bandwidth evaluated at the cloud's own size).
pub fn smooth_cloud(cloud: &ParticleCloud, spec: &BandwidthSpec) -> Result<KdeDensity> {
    let d = cloud.dim();
    let (rule, scales) = kde_setup_from(cloud, spec, d)?;
    KdeDensity::with_scales(
        cloud.points().to_owned(),
        cloud.log_weights().to_owned(),
        rule.bandwidth(cloud.len(), d),
        scales,
    )
}

/// Minibatch index source shared by the inference loops.
#[derive(Debug)]
pub(crate) struct BatchSampler {
    n: usize,
    mode: MinibatchMode,
    pending: Vec<usize>,
}

impl BatchSampler {
    pub(crate) fn new(n: usize, mode: MinibatchMode) -> Self {
        Self {
            n,
            mode,
            pending: Vec::new(),
        }
    }

    pub(crate) fn next_batch(&mut self, rng: &mut dyn RngCore, batch_size: usize) -> Vec<usize> {
        match self.mode {
            MinibatchMode::Replacement => (0..batch_size)
                .map(|_| rng.random_range(0..self.n))
                .collect(),
            MinibatchMode::Epochs => {
                let mut batch = Vec::with_capacity(batch_size);
                while batch.len() < batch_size {
                    if self.pending.is_empty() {
                        let mut idx: Vec<usize> = (0..self.n).collect();
                        idx.shuffle(&mut *rng);
                        self.pending = idx;
                    }
                    batch.push(self.pending.pop().expect("refilled above"));
                }
                batch
            }
        }
    }
}

enum Phase {
    Cloud(ParticleCloud),
    Kde(KdeDensity),
}

impl Phase {
    fn snapshot(&self) -> DensityState {
        match self {
            Self::Cloud(c) => DensityState::Particles(c.clone()),
            Self::Kde(k) => DensityState::Smoothed(k.clone()),
        }
    }

    fn particle_count(&self) -> usize {
        match self {
            Self::Cloud(c) => c.len(),
            Self::Kde(k) => k.len(),
        }
    }

    fn ess(&self) -> f64 {
        match self {
            Self::Cloud(c) => c.ess(),
            Self::Kde(k) => k.to_cloud().ess(),
        }
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub density: DensityState,
    pub trace: InferenceTrace,
}

/// Metric callback invoked at each recorded iteration.
pub type DiagnosticFn<'a> = dyn Fn(usize, &DensityState) -> BTreeMap<String, f64> + 'a;

/// Run the full inference loop described by `config`.
///
/// Randomness is derived entirely from `config.rng_seed`: stream 0 seeds the
/// prior support, stream `t` drives iteration `t` (any support conversion
/// first, then the minibatch, then proposal resampling), so equal configs
/// give byte-identical traces.
pub fn run_pmd(
    model: &dyn Model,
    data: &Dataset,
    config: &PmdConfig,
    diagnostics: Option<&DiagnosticFn<'_>>,
) -> Result<RunResult> {
    config.validate()?;
    model.check_data(data)?;
    let n = data.len();
    if config.batch_size > n {
        return Err(Error::ConfigMismatch(format!(
            "batch_size {} exceeds the dataset size {n}",
            config.batch_size
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

    let m1 = config.particles.size(1);
    let support = model.sample_prior(&mut stream_rng(seed, 0), m1);
    let initial = ParticleCloud::uniform(support)?;

    // Kernel strategies start from the smoothed prior sample; the pure
    // reweighting strategy keeps the raw support.
    let starts_smoothed = matches!(
        config.strategy,
        Strategy::WeightedKde | Strategy::SwitchAt { .. }
    );
    let mut kde_rule: Option<BandwidthRule> = None;
    let mut phase = if starts_smoothed {
        let (rule, scales) = kde_setup_from(&initial, &config.bandwidth, d)?;
        let kde = KdeDensity::with_scales(
            initial.points().to_owned(),
            initial.log_weights().to_owned(),
            rule.bandwidth(m1, d),
            scales,
        )?;
        kde_rule = Some(rule);
        Phase::Kde(kde)
    } else {
        Phase::Cloud(initial)
    };

    let mut sampler = BatchSampler::new(n, config.minibatch);
    let mut trace = InferenceTrace::default();
    let mut data_visited = 0usize;

    for t in 1..=config.iterations {
        let mut rng = stream_rng(seed, t as u64);

        // Freeze the kernel iterate into a fixed support: the scheduled
        // particle count is drawn from the current KDE, which takes over the
        // prior's role in the reweighting phase (uniform initial weights).
        if let Strategy::SwitchAt { t_switch } = config.strategy {
            if t == t_switch {
                if let Phase::Kde(kde) = &phase {
                    let support = kde.sample(&mut rng, config.particles.size(t));
                    phase = Phase::Cloud(ParticleCloud::uniform(support)?);
                    kde_rule = None;
                }
            }
        }

        let m_t = match &phase {
            Phase::Cloud(c) => c.len(),
            Phase::Kde(_) => config.particles.size(t),
        };
        let gamma = config.step.stepsize(t, m_t, d);
        let batch = sampler.next_batch(&mut rng, config.batch_size);
        data_visited += batch.len();

        match &mut phase {
            Phase::Cloud(cloud) => {
                *cloud = reweight_particles(cloud, model, data, &batch, gamma)?;
            }
            Phase::Kde(kde) => {
                // The median trick is re-resolved against the current cloud
                // every iteration, so the kernel width follows the iterate:
                // wide while the support is still prior-spread, narrow once
                // it has contracted onto the posterior. The re-smoothed
                // estimate is what the prox step samples from and inherits
                // kernel scales from.
                if matches!(
                    config.bandwidth,
                    BandwidthSpec::MedianTrick { .. } | BandwidthSpec::PairwiseQuantile { .. }
                ) {
                    let cloud = kde.to_cloud();
                    let (rule, scales) = kde_setup_from(&cloud, &config.bandwidth, d)?;
                    *kde = KdeDensity::with_scales(
                        cloud.points().to_owned(),
                        cloud.log_weights().to_owned(),
                        rule.bandwidth(cloud.len(), d),
                        scales,
                    )?;
                    kde_rule = Some(rule);
                }
                let rule = kde_rule.as_ref().expect("kernel phase is set up");
                let h_next = rule.bandwidth(m_t, d);
                *kde = kde_prox_step(kde, model, data, &batch, gamma, m_t, h_next, &mut rng)?;
            }
        }

        if record_set.contains(&t) {
            let state = phase.snapshot();
            let metrics = diagnostics.map(|f| f(t, &state)).unwrap_or_default();
            trace.push(TraceRecord {
                t,
                gamma,
                m: phase.particle_count(),
                ess: phase.ess(),
                data_visited,
                metrics,
                wall_secs: start.elapsed().as_secs_f64(),
                state: Some(state),
            });
        }
    }

    Ok(RunResult {
        density: phase.snapshot(),
        trace,
    })
}
