//! Probabilistic models: prior + per-observation likelihood with optional
//! analytic gradients.
//!
//! A model sees one data row at a time. What a row means is up to the model:
//! the Gaussian models read it as an observation vector, logistic regression
//! reads features plus a trailing ±1 label.

use ndarray::{Array1, Array2, ArrayView2};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// `ln(1 + e^u)` without overflow for large `|u|`.
pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Logistic sigmoid `1 / (1 + e^{-u})`.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn log_normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * crate::density::LN_2PI - std.ln() - 0.5 * z * z
}

/// Observations as rows of a dense matrix. Row layout is model-specific.
#[derive(Debug, Clone)]
pub struct Dataset {
    rows: Array2<f64>,
}

impl Dataset {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InvalidData("dataset is empty".into()));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(
                "dataset contains NaN or infinite values".into(),
            ));
        }
        Ok(Self { rows })
    }

    /// Convenience for scalar observations.
    pub fn from_scalar(values: &[f64]) -> Result<Self> {
        let rows = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .expect("shape matches length");
        Self::new(rows)
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // N >= 1 by construction
    }

    pub fn row_dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i).to_slice().expect("standard layout row")
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }
}

/// Prior and likelihood interface consumed by both inference strategies.
///
/// Gradients are optional: the default implementations refuse with
/// [`Error::GradientUnavailable`], and only gradient-based consumers (the
/// Langevin baseline) ever call them.
pub trait Model {
    /// Parameter dimension `d`.
    fn dim(&self) -> usize;

    /// Expected dataset row width; used by [`Model::check_data`].
    fn row_dim(&self) -> usize;

    fn log_prior(&self, theta: &[f64]) -> f64;

    /// Log-likelihood of a single data row.
    fn log_likelihood(&self, theta: &[f64], row: &[f64]) -> f64;

    fn grad_log_prior(&self, _theta: &[f64]) -> Result<Array1<f64>> {
        Err(Error::GradientUnavailable)
    }

    fn grad_log_likelihood(&self, _theta: &[f64], _row: &[f64]) -> Result<Array1<f64>> {
        Err(Error::GradientUnavailable)
    }

    /// Draw `count` parameter vectors from the prior.
    fn sample_prior(&self, rng: &mut dyn RngCore, count: usize) -> Array2<f64>;

    /// Validate dataset shape/content once before iterating over it.
    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.row_dim() != self.row_dim() {
            return Err(Error::InvalidData(format!(
                "model expects rows of width {}, dataset has {}",
                self.row_dim(),
                data.row_dim()
            )));
        }
        Ok(())
    }
}

/// `log p(θ) + Σ_n log p(x_n | θ)` over the full dataset.
pub fn log_unnormalized_posterior(model: &dyn Model, data: &Dataset, theta: &[f64]) -> f64 {
    let mut lp = model.log_prior(theta);
    for i in 0..data.len() {
        lp += model.log_likelihood(theta, data.row(i));
    }
    lp
}

fn gaussian_prior_sample(
    rng: &mut dyn RngCore,
    count: usize,
    mean: &[f64],
    std: &[f64],
) -> Array2<f64> {
    let d = mean.len();
    let mut out = Array2::zeros((count, d));
    for mut row in out.rows_mut() {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut *rng);
            row[j] = mean[j] + std[j] * z;
        }
    }
    out
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// Isotropic Gaussian prior `N(μ0, v0·I)` with Gaussian observations
/// `x | θ ~ N(θ, vx·I)`. The posterior is Gaussian in closed form, which
/// makes this the calibration model for exactness checks.
#[derive(Debug, Clone)]
pub struct ConjugateGaussian {
    pub prior_mean: Array1<f64>,
    pub prior_var: f64,
    pub obs_var: f64,
    prior_std: f64,
    obs_std: f64,
}

impl ConjugateGaussian {
    pub fn new(prior_mean: Array1<f64>, prior_var: f64, obs_var: f64) -> Result<Self> {
        if prior_mean.is_empty() {
            return Err(Error::InvalidParameter("prior mean must be nonempty".into()));
        }
        require_positive("prior_var", prior_var)?;
        require_positive("obs_var", obs_var)?;
        Ok(Self {
            prior_mean,
            prior_var,
            obs_var,
            prior_std: prior_var.sqrt(),
            obs_std: obs_var.sqrt(),
        })
    }
}

impl Model for ConjugateGaussian {
    fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    fn row_dim(&self) -> usize {
        self.prior_mean.len()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.prior_mean.iter())
            .map(|(t, m)| log_normal_pdf(*t, *m, self.prior_std))
            .sum()
    }

    fn log_likelihood(&self, theta: &[f64], row: &[f64]) -> f64 {
        theta
            .iter()
            .zip(row.iter())
            .map(|(t, x)| log_normal_pdf(*x, *t, self.obs_std))
            .sum()
    }

    fn grad_log_prior(&self, theta: &[f64]) -> Result<Array1<f64>> {
        Ok(theta
            .iter()
            .zip(self.prior_mean.iter())
            .map(|(t, m)| (m - t) / self.prior_var)
            .collect())
    }

    fn grad_log_likelihood(&self, theta: &[f64], row: &[f64]) -> Result<Array1<f64>> {
        Ok(theta
            .iter()
            .zip(row.iter())
            .map(|(t, x)| (x - t) / self.obs_var)
            .collect())
    }

    fn sample_prior(&self, rng: &mut dyn RngCore, count: usize) -> Array2<f64> {
        let std = vec![self.prior_std; self.dim()];
        gaussian_prior_sample(rng, count, self.prior_mean.as_slice().unwrap(), &std)
    }
}

/// Two-component Gaussian mixture with tied means, the standard bimodal
/// benchmark: `x ~ p·N(θ1, σx²) + (1-p)·N(θ1+θ2, σx²)` with independent
/// zero-mean Gaussian priors on θ1, θ2 (standard deviations σ1, σ2).
///
/// Swapping `(θ1, θ2) → (θ1+θ2, -θ2)` leaves the likelihood invariant when
/// `p = 1/2`, so the posterior carries a genuine second mode.
#[derive(Debug, Clone)]
pub struct TiedMixture {
    pub prior_std: [f64; 2],
    pub obs_std: f64,
    pub mix: f64,
}

impl TiedMixture {
    pub fn new(sigma1: f64, sigma2: f64, sigma_x: f64, mix: f64) -> Result<Self> {
        require_positive("sigma1", sigma1)?;
        require_positive("sigma2", sigma2)?;
        require_positive("sigma_x", sigma_x)?;
        if !(mix > 0.0 && mix < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "mixture weight must lie in (0,1), got {mix}"
            )));
        }
        Ok(Self {
            prior_std: [sigma1, sigma2],
            obs_std: sigma_x,
            mix,
        })
    }

    /// Log-density of each component at `x` including the mixing weight.
    fn component_terms(&self, theta: &[f64], x: f64) -> [f64; 2] {
        [
            self.mix.ln() + log_normal_pdf(x, theta[0], self.obs_std),
            (1.0 - self.mix).ln() + log_normal_pdf(x, theta[0] + theta[1], self.obs_std),
        ]
    }
}

impl Model for TiedMixture {
    fn dim(&self) -> usize {
        2
    }

    fn row_dim(&self) -> usize {
        1
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        log_normal_pdf(theta[0], 0.0, self.prior_std[0])
            + log_normal_pdf(theta[1], 0.0, self.prior_std[1])
    }

    fn log_likelihood(&self, theta: &[f64], row: &[f64]) -> f64 {
        let terms = self.component_terms(theta, row[0]);
        crate::density::log_sum_exp(&terms).expect("two finite terms")
    }

    fn grad_log_prior(&self, theta: &[f64]) -> Result<Array1<f64>> {
        Ok(Array1::from_vec(vec![
            -theta[0] / (self.prior_std[0] * self.prior_std[0]),
            -theta[1] / (self.prior_std[1] * self.prior_std[1]),
        ]))
    }

    fn grad_log_likelihood(&self, theta: &[f64], row: &[f64]) -> Result<Array1<f64>> {
        let x = row[0];
        let terms = self.component_terms(theta, x);
        let total = crate::density::log_sum_exp(&terms).expect("two finite terms");
        // responsibilities of the two components
        let r0 = (terms[0] - total).exp();
        let r1 = (terms[1] - total).exp();
        let v = self.obs_std * self.obs_std;
        let pull0 = (x - theta[0]) / v;
        let pull1 = (x - theta[0] - theta[1]) / v;
        Ok(Array1::from_vec(vec![
            r0 * pull0 + r1 * pull1,
            r1 * pull1,
        ]))
    }

    fn sample_prior(&self, rng: &mut dyn RngCore, count: usize) -> Array2<f64> {
        gaussian_prior_sample(rng, count, &[0.0, 0.0], &self.prior_std)
    }
}

/// Binary logistic regression with an isotropic Gaussian prior on the
/// weights. Rows are `p` feature values followed by a label in `{-1, +1}`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub num_features: usize,
    pub prior_var: f64,
    prior_std: f64,
}

impl LogisticRegression {
    pub fn new(num_features: usize, prior_var: f64) -> Result<Self> {
        if num_features == 0 {
            return Err(Error::InvalidParameter(
                "logistic regression needs at least one feature".into(),
            ));
        }
        require_positive("prior_var", prior_var)?;
        Ok(Self {
            num_features,
            prior_var,
            prior_std: prior_var.sqrt(),
        })
    }

    fn split_row<'a>(&self, row: &'a [f64]) -> (&'a [f64], f64) {
        let (features, label) = row.split_at(self.num_features);
        (features, label[0])
    }
}

impl Model for LogisticRegression {
    fn dim(&self) -> usize {
        self.num_features
    }

    fn row_dim(&self) -> usize {
        self.num_features + 1
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .map(|t| log_normal_pdf(*t, 0.0, self.prior_std))
            .sum()
    }

    fn log_likelihood(&self, theta: &[f64], row: &[f64]) -> f64 {
        let (features, y) = self.split_row(row);
        let margin: f64 = theta.iter().zip(features).map(|(t, x)| t * x).sum();
        -softplus(-y * margin)
    }

    fn grad_log_prior(&self, theta: &[f64]) -> Result<Array1<f64>> {
        Ok(theta.iter().map(|t| -t / self.prior_var).collect())
    }

    fn grad_log_likelihood(&self, theta: &[f64], row: &[f64]) -> Result<Array1<f64>> {
        let (features, y) = self.split_row(row);
        let margin: f64 = theta.iter().zip(features).map(|(t, x)| t * x).sum();
        let coeff = y * sigmoid(-y * margin);
        Ok(features.iter().map(|x| coeff * x).collect())
    }

    fn sample_prior(&self, rng: &mut dyn RngCore, count: usize) -> Array2<f64> {
        let mean = vec![0.0; self.num_features];
        let std = vec![self.prior_std; self.num_features];
        gaussian_prior_sample(rng, count, &mean, &std)
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.row_dim() != self.row_dim() {
            return Err(Error::InvalidData(format!(
                "logistic model expects {} features plus a label column, dataset rows have width {}",
                self.num_features,
                data.row_dim()
            )));
        }
        for i in 0..data.len() {
            let raw = data.row(i)[self.num_features];
            if raw != 1.0 && raw != -1.0 {
                return Err(Error::InvalidData(format!(
                    "row {i} has label {raw}, expected -1 or 1"
                )));
            }
        }
        Ok(())
    }
}

/// Conjugate Gaussian model validated against `data` up front.
pub fn make_conjugate_gaussian(
    prior_mean: Array1<f64>,
    prior_var: f64,
    obs_var: f64,
    data: &Dataset,
) -> Result<ConjugateGaussian> {
    let model = ConjugateGaussian::new(prior_mean, prior_var, obs_var)?;
    model.check_data(data)?;
    Ok(model)
}

/// Tied mixture model validated against `data` up front.
pub fn make_tied_mixture(
    sigma1: f64,
    sigma2: f64,
    sigma_x: f64,
    mix: f64,
    data: &Dataset,
) -> Result<TiedMixture> {
    let model = TiedMixture::new(sigma1, sigma2, sigma_x, mix)?;
    model.check_data(data)?;
    Ok(model)
}

/// Logistic model sized from `data`: every row is read as features plus one
/// trailing ±1 label, so the parameter dimension is the row width minus one.
pub fn make_logistic(data: &Dataset, prior_var: f64) -> Result<LogisticRegression> {
    if data.row_dim() < 2 {
        return Err(Error::InvalidData(
            "logistic data needs at least one feature column plus a label column".into(),
        ));
    }
    let model = LogisticRegression::new(data.row_dim() - 1, prior_var)?;
    model.check_data(data)?;
    Ok(model)
}

/// Central finite-difference gradient used as the oracle for analytic
/// gradients in tests.
#[cfg(test)]
pub(crate) fn finite_difference_grad(f: impl Fn(&[f64]) -> f64, theta: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for j in 0..theta.len() {
        let h = 1e-5 * theta[j].abs().max(1.0);
        probe[j] = theta[j] + h;
        let up = f(&probe);
        probe[j] = theta[j] - h;
        let down = f(&probe);
        probe[j] = theta[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    grad
}
