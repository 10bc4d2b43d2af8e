//! Log-domain simplex weights, particle clouds, and weighted Gaussian kernel
//! density estimates.
//!
//! All weight arithmetic stays in the log domain end to end: likelihood powers
//! of the form `p(x|θ)^{Nγ}` underflow catastrophically in linear space, so
//! normalization only ever happens through [`log_sum_exp`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `log Σ exp(v_i)`, stable against overflow and absorbing `-inf` entries.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "log_sum_exp of an empty sequence".into(),
        ));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("log_sum_exp of NaN".into()));
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // all -inf (or +inf, which we treat as saturated)
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Normalize log-weights onto the probability simplex.
///
/// The result is invariant (to floating-point tolerance) under adding a
/// constant to every input. Errors with [`Error::DegenerateWeights`] when all
/// entries are `-inf`, which signals total particle depletion.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let logw = log_normalized(log_weights)?;
    Ok(logw.iter().map(|lw| lw.exp()).collect())
}

/// Log-domain counterpart of [`normalize_log_weights`]: returns log-weights
/// whose exponentials sum to 1.
pub(crate) fn log_normalized(log_weights: &[f64]) -> Result<Vec<f64>> {
    let lse = log_sum_exp(log_weights)?;
    if !lse.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let mut out: Vec<f64> = log_weights.iter().map(|lw| lw - lse).collect();
    // Second pass tightens Σ exp to 1 within accumulation error.
    let sum: f64 = out.iter().map(|lw| lw.exp()).sum();
    let corr = sum.ln();
    for lw in &mut out {
        *lw -= corr;
    }
    Ok(out)
}

/// `1 / Σ α_i²` for a simplex vector: `m` for uniform weights, 1 when all
/// mass sits on a single particle.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    1.0 / sq
}

/// Median Euclidean distance over all point pairs.
///
/// Returns 0 when fewer than two points. Above `cap` points a deterministic
/// stride subsample keeps the cost quadratic in `cap` only.
pub fn median_pairwise_distance(points: ArrayView2<'_, f64>) -> f64 {
    const CAP: usize = 2048;
    let m = points.nrows();
    if m < 2 {
        return 0.0;
    }
    let stride = m.div_ceil(CAP);
    let rows: Vec<ArrayView1<'_, f64>> = (0..m).step_by(stride).map(|i| points.row(i)).collect();
    let k = rows.len();
    let mut dists = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            let d2: f64 = rows[i]
                .iter()
                .zip(rows[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    let mid = dists.len() / 2;
    let (_, med, _) = dists.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *med
}

/// Weighted support points in `R^d` with simplex weights held in log domain.
///
/// This is both the state of the reweighting strategy and the common output
/// representation fed to diagnostics.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    points: Array2<f64>,
    log_weights: Array1<f64>,
}

impl ParticleCloud {
    /// Build a cloud from raw (unnormalized) log-weights; normalizes on entry.
    pub fn new(points: Array2<f64>, log_weights: Array1<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::InvalidArgument("particle cloud needs m >= 1".into()));
        }
        if points.nrows() != log_weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} log-weights",
                points.nrows(),
                log_weights.len()
            )));
        }
        let logw = log_normalized(log_weights.as_slice().expect("contiguous"))?;
        Ok(Self {
            points,
            log_weights: Array1::from_vec(logw),
        })
    }

    /// Equal-weight cloud over the given points.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let m = points.nrows();
        Self::new(points, Array1::zeros(m))
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // m >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points
            .row(i)
            .to_slice()
            .expect("standard layout row")
    }

    pub fn log_weights(&self) -> ArrayView1<'_, f64> {
        self.log_weights.view()
    }

    pub fn weights(&self) -> Array1<f64> {
        self.log_weights.mapv(f64::exp)
    }

    pub fn ess(&self) -> f64 {
        let sq: f64 = self.log_weights.iter().map(|lw| (2.0 * lw).exp()).sum();
        1.0 / sq
    }

    /// `Σ α_i f(θ_i)`, the weighted-particle estimate of `∫ q f`.
    pub fn integral_estimate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len())
            .map(|i| self.log_weights[i].exp() * f(self.point(i)))
            .sum()
    }

    /// Estimate plus its self-normalized importance-sampling standard error
    /// `sqrt(Σ α_i² (f(θ_i) − μ̂)²)`.
    pub fn integral_estimate_with_se(&self, f: impl Fn(&[f64]) -> f64) -> (f64, f64) {
        let vals: Vec<f64> = (0..self.len()).map(|i| f(self.point(i))).collect();
        let est: f64 = vals
            .iter()
            .zip(self.log_weights.iter())
            .map(|(v, lw)| lw.exp() * v)
            .sum();
        let var: f64 = vals
            .iter()
            .zip(self.log_weights.iter())
            .map(|(v, lw)| (2.0 * lw).exp() * (v - est) * (v - est))
            .sum();
        (est, var.sqrt())
    }

    pub fn weighted_mean(&self) -> Array1<f64> {
        let mut mean = Array1::zeros(self.dim());
        for i in 0..self.len() {
            let w = self.log_weights[i].exp();
            mean.scaled_add(w, &self.points.row(i));
        }
        mean
    }

    /// Weighted per-dimension standard deviation around the weighted mean.
    pub fn weighted_std(&self) -> Array1<f64> {
        let mean = self.weighted_mean();
        let mut var = Array1::<f64>::zeros(self.dim());
        for i in 0..self.len() {
            let w = self.log_weights[i].exp();
            for j in 0..self.dim() {
                let c = self.points[(i, j)] - mean[j];
                var[j] += w * c * c;
            }
        }
        var.mapv(f64::sqrt)
    }

    /// CSV serialization: header `theta_1,...,theta_d,weight`, one row per
    /// particle.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for j in 0..self.dim() {
            write!(w, "theta_{},", j + 1)?;
        }
        writeln!(w, "weight")?;
        for i in 0..self.len() {
            for j in 0..self.dim() {
                write!(w, "{},", self.points[(i, j)])?;
            }
            writeln!(w, "{}", self.log_weights[i].exp())?;
        }
        Ok(())
    }
}

/// Weighted Gaussian-kernel mixture: centers, simplex weights, and a scalar
/// bandwidth `h`. Integrates to 1 by construction and is strictly positive
/// everywhere.
///
/// An optional per-dimension scale vector standardizes anisotropic particle
/// spreads: the kernel for dimension `j` has standard deviation `h·s_j`.
/// With unit scales this is the plain isotropic estimator
/// `Σ α_i (2π)^{-d/2} h^{-d} exp(-‖θ-θ_i‖²/(2h²))`.
#[derive(Debug, Clone)]
pub struct KdeDensity {
    centers: Array2<f64>,
    log_weights: Array1<f64>,
    bandwidth: f64,
    scales: Array1<f64>,
    log_norm: f64,
}

impl KdeDensity {
    pub fn new(centers: Array2<f64>, log_weights: Array1<f64>, bandwidth: f64) -> Result<Self> {
        let d = centers.ncols();
        Self::with_scales(centers, log_weights, bandwidth, Array1::ones(d))
    }

    pub fn with_scales(
        centers: Array2<f64>,
        log_weights: Array1<f64>,
        bandwidth: f64,
        scales: Array1<f64>,
    ) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        if scales.len() != centers.ncols() || scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter("bad kernel scale vector".into()));
        }
        let cloud = ParticleCloud::new(centers, log_weights)?;
        let d = cloud.dim() as f64;
        let log_norm = 0.5 * d * LN_2PI
            + scales.iter().map(|s| (bandwidth * s).ln()).sum::<f64>();
        Ok(Self {
            centers: cloud.points,
            log_weights: cloud.log_weights,
            bandwidth,
            scales,
            log_norm,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn scales(&self) -> ArrayView1<'_, f64> {
        self.scales.view()
    }

    pub fn centers(&self) -> ArrayView2<'_, f64> {
        self.centers.view()
    }

    pub fn log_weights(&self) -> ArrayView1<'_, f64> {
        self.log_weights.view()
    }

    /// The mixture evaluated in log domain via `log_sum_exp`.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        let mut terms = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let mut z2 = 0.0;
            for j in 0..self.dim() {
                let z = (theta[j] - self.centers[(i, j)]) / (self.bandwidth * self.scales[j]);
                z2 += z * z;
            }
            terms.push(self.log_weights[i] - 0.5 * z2);
        }
        log_sum_exp(&terms).expect("nonempty") - self.log_norm
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        self.log_density(theta).exp()
    }

    /// Draw `count` i.i.d. samples: an inverse-CDF categorical pick of the
    /// center (first index whose cumulative weight reaches `u`, in stored
    /// order) plus a kernel-scaled standard-normal offset.
    pub fn sample(&self, rng: &mut dyn RngCore, count: usize) -> Array2<f64> {
        let cumulative: Vec<f64> = self
            .log_weights
            .iter()
            .scan(0.0, |acc, lw| {
                *acc += lw.exp();
                Some(*acc)
            })
            .collect();
        let mut out = Array2::zeros((count, self.dim()));
        for mut row in out.rows_mut() {
            let u: f64 = rng.random();
            let idx = cumulative
                .partition_point(|c| *c < u)
                .min(self.len() - 1);
            for j in 0..self.dim() {
                let z: f64 = StandardNormal.sample(&mut *rng);
                row[j] = self.centers[(idx, j)] + self.bandwidth * self.scales[j] * z;
            }
        }
        out
    }

    /// The mixture mean `Σ α_i θ_i` (kernels are centered).
    pub fn mean(&self) -> Array1<f64> {
        self.to_cloud().weighted_mean()
    }

    /// Centers and weights as a particle cloud (drops the smoothing).
    pub fn to_cloud(&self) -> ParticleCloud {
        ParticleCloud {
            points: self.centers.clone(),
            log_weights: self.log_weights.clone(),
        }
    }
}

/// Bandwidth schedule `h = scale · m^{-1/(d+2β)}`.
///
/// `beta` is the assumed smoothness order of the target density; larger
/// `beta` shrinks the exponent and so decays `h` more slowly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BandwidthRule {
    pub beta: f64,
    pub scale: f64,
}

impl BandwidthRule {
    pub fn new(beta: f64, scale: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth scale must be positive, got {scale}"
            )));
        }
        Ok(Self { beta, scale })
    }

    pub fn bandwidth(&self, m: usize, d: usize) -> f64 {
        let exponent = -1.0 / (d as f64 + 2.0 * self.beta);
        self.scale * (m as f64).powf(exponent)
    }

    /// Rule whose decay curve passes through `h(m) = target_h`, so the decay
    /// applies relative to an externally chosen anchor (e.g. the median
    /// trick at the first iteration).
    pub fn anchored(beta: f64, target_h: f64, m: usize, d: usize) -> Result<Self> {
        if !(target_h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "anchor bandwidth must be positive, got {target_h}"
            )));
        }
        let exponent = 1.0 / (d as f64 + 2.0 * beta);
        Self::new(beta, target_h * (m as f64).powf(exponent))
    }
}
