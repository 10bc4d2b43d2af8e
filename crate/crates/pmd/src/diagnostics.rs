//! Posterior-quality diagnostics against a dense grid oracle.
//!
//! The oracle discretizes the unnormalized log posterior on a regular grid
//! (midpoint rule, d ≤ 2) and normalizes by log-sum-exp. Every comparison
//! metric is then a finite sum over cells, which keeps the diagnostics
//! independent of the inference code they judge.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::density::{log_sum_exp, KdeDensity, ParticleCloud};
use crate::error::{Error, Result};
use crate::mirror_descent::BandwidthSpec;
use crate::model::{sigmoid, Dataset, LogisticRegression, Model};

/// Mass allowed in the outermost layer of cells before the grid is declared
/// too small for the density it is supposed to capture.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-4;

/// Density floor used by [`GridOracle::cross_entropy`] so that a zero
/// estimate contributes a large-but-finite penalty instead of infinity.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// One grid dimension: `cells` equal cells over `[lo, hi)` with centers at
/// `lo + (i + 1/2)·δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        let axis = Self { lo, hi, cells };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid axis needs finite lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.cells < 2 {
            return Err(Error::InvalidParameter(
                "grid axis needs at least 2 cells".into(),
            ));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.delta()
    }
}

/// Normalized probability masses on a regular grid (1-D or 2-D), the
/// reference object all metrics are computed against.
#[derive(Debug, Clone)]
pub struct GridOracle {
    axes: Vec<GridAxis>,
    /// Normalized log cell masses in row-major order; `log_sum_exp == 0`.
    log_mass: Vec<f64>,
    /// `log ∫ exp(f)` of the raw input, i.e. the log partition function of
    /// the unnormalized density under the midpoint rule.
    log_partition: f64,
}

impl GridOracle {
    /// Discretize an unnormalized log-density. Errors with
    /// [`Error::MassLeak`] when more than [`BOUNDARY_MASS_LIMIT`] of the
    /// normalized mass lands on boundary cells — the grid is then too small
    /// (or misplaced) and every metric computed from it would be suspect.
    pub fn from_log_density(
        axes: Vec<GridAxis>,
        log_density: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "grid oracle supports 1 or 2 dimensions, got {}",
                axes.len()
            )));
        }
        for axis in &axes {
            axis.validate()?;
        }
        let log_volume: f64 = axes.iter().map(|a| a.delta().ln()).sum();
        let cells: usize = axes.iter().map(|a| a.cells).product();
        let mut raw = Vec::with_capacity(cells);
        let mut point = vec![0.0; axes.len()];
        for c in 0..cells {
            decode(&axes, c, &mut point);
            let v = log_density(&point);
            if v.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "log-density is NaN at {point:?}"
                )));
            }
            raw.push(v);
        }
        let lse = log_sum_exp(&raw)?;
        if !lse.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        let log_mass: Vec<f64> = raw.iter().map(|v| v - lse).collect();
        let grid = Self {
            axes,
            log_mass,
            log_partition: lse + log_volume,
        };
        let boundary_mass = grid.boundary_mass();
        if boundary_mass > BOUNDARY_MASS_LIMIT {
            return Err(Error::MassLeak {
                boundary_mass,
                limit: BOUNDARY_MASS_LIMIT,
            });
        }
        Ok(grid)
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.log_mass.len()
    }

    /// Log of the normalizing constant of the raw input density.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn log_cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.delta().ln()).sum()
    }

    pub fn cell_center(&self, c: usize) -> Vec<f64> {
        let mut point = vec![0.0; self.dim()];
        decode(&self.axes, c, &mut point);
        point
    }

    pub fn mass(&self, c: usize) -> f64 {
        self.log_mass[c].exp()
    }

    fn boundary_mass(&self) -> f64 {
        let mut total = 0.0;
        for c in 0..self.num_cells() {
            if self.is_boundary(c) {
                total += self.mass(c);
            }
        }
        total
    }

    fn is_boundary(&self, c: usize) -> bool {
        match self.axes.len() {
            1 => c == 0 || c == self.axes[0].cells - 1,
            2 => {
                let n1 = self.axes[1].cells;
                let (i, j) = (c / n1, c % n1);
                i == 0 || i == self.axes[0].cells - 1 || j == 0 || j == n1 - 1
            }
            _ => unreachable!("dimension checked at construction"),
        }
    }

    /// Differential entropy `−Σ P_c log(P_c / V)` of the discretized density.
    pub fn entropy(&self) -> f64 {
        let log_v = self.log_cell_volume();
        -self
            .log_mass
            .iter()
            .filter(|lm| lm.is_finite())
            .map(|lm| lm.exp() * (lm - log_v))
            .sum::<f64>()
    }

    /// Grid mean per dimension.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        let mut point = vec![0.0; self.dim()];
        for c in 0..self.num_cells() {
            decode(&self.axes, c, &mut point);
            let w = self.mass(c);
            for (m, p) in mean.iter_mut().zip(point.iter()) {
                *m += w * p;
            }
        }
        mean
    }

    /// Total variation `½ Σ |P_c − Q_c|` between this density and an
    /// estimate, with the estimate's cell masses renormalized over the grid
    /// so the result lives in `[0, 1]` even when the estimate leaks mass
    /// outside. Lower is better; 0 means identical on the grid.
    pub fn total_variation(&self, est_log_density: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let est = self.estimate_log_masses(&est_log_density)?;
        let lse = log_sum_exp(&est)?;
        if !lse.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        let tv: f64 = est
            .iter()
            .zip(self.log_mass.iter())
            .map(|(e, p)| (p.exp() - (e - lse).exp()).abs())
            .sum::<f64>()
            * 0.5;
        Ok(tv)
    }

    /// Cross-entropy `−Σ P_c log q(center_c)` of an estimate `q` under this
    /// density. The estimate is *not* renormalized — a poorly normalized or
    /// mass-leaking `q` pays for it here — and is floored at
    /// [`DENSITY_FLOOR`] so vanishing estimates stay finite.
    pub fn cross_entropy(&self, est_log_density: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let est = self.estimate_log_masses(&est_log_density)?;
        let floor = DENSITY_FLOOR.ln();
        Ok(-est
            .iter()
            .zip(self.log_mass.iter())
            .filter(|(_, p)| p.is_finite())
            .map(|(e, p)| p.exp() * e.max(floor))
            .sum::<f64>())
    }

    /// `KL(self ‖ q) = cross_entropy(q) − entropy()`; nonnegative up to
    /// quadrature error when `q` is a normalized density.
    pub fn kl_divergence(&self, est_log_density: impl Fn(&[f64]) -> f64) -> Result<f64> {
        Ok(self.cross_entropy(est_log_density)? - self.entropy())
    }

    fn estimate_log_masses(&self, est_log_density: &impl Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.num_cells());
        let mut point = vec![0.0; self.dim()];
        for c in 0..self.num_cells() {
            decode(&self.axes, c, &mut point);
            let v = est_log_density(&point);
            if v.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "estimate log-density is NaN at {point:?}"
                )));
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Brute-force grid discretization of the posterior of `model` given `data`.
pub fn build_grid_oracle(
    model: &dyn Model,
    data: &Dataset,
    axes: Vec<GridAxis>,
) -> Result<GridOracle> {
    model.check_data(data)?;
    GridOracle::from_log_density(axes, |theta| {
        crate::model::log_unnormalized_posterior(model, data, theta)
    })
}

fn decode(axes: &[GridAxis], c: usize, point: &mut [f64]) {
    match axes.len() {
        1 => point[0] = axes[0].center(c),
        2 => {
            let n1 = axes[1].cells;
            point[0] = axes[0].center(c / n1);
            point[1] = axes[1].center(c % n1);
        }
        _ => unreachable!("dimension checked at construction"),
    }
}

/// Closed-form posterior `(mean, variance)` for the conjugate Gaussian
/// model: independent per dimension with shared variance. Accepts zero
/// observations, where it reduces to the prior.
pub fn conjugate_gaussian_posterior(
    prior_mean: &Array1<f64>,
    prior_var: f64,
    obs_var: f64,
    observations: ArrayView2<'_, f64>,
) -> Result<(Array1<f64>, f64)> {
    if !(prior_var > 0.0) || !(obs_var > 0.0) {
        return Err(Error::InvalidParameter(
            "variances must be positive".into(),
        ));
    }
    let d = prior_mean.len();
    if observations.nrows() > 0 && observations.ncols() != d {
        return Err(Error::InvalidData(format!(
            "observations have width {}, expected {}",
            observations.ncols(),
            d
        )));
    }
    let n = observations.nrows() as f64;
    let precision = 1.0 / prior_var + n / obs_var;
    let var = 1.0 / precision;
    let mut mean = Array1::zeros(d);
    for j in 0..d {
        let sum: f64 = observations.column(j).sum();
        mean[j] = var * (prior_mean[j] / prior_var + sum / obs_var);
    }
    Ok((mean, var))
}

/// Empirical convergence rate: the slope of an ordinary least-squares fit of
/// `ln errors` on `ln sizes`. Needs at least three strictly positive pairs.
pub fn rate_fit(sizes: &[f64], errors: &[f64]) -> Result<f64> {
    if sizes.len() != errors.len() || sizes.len() < 3 {
        return Err(Error::InvalidArgument(
            "rate fit needs at least three (size, error) pairs of equal length".into(),
        ));
    }
    if sizes.iter().chain(errors.iter()).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(
            "rate fit needs strictly positive values".into(),
        ));
    }
    let u: Vec<f64> = sizes.iter().map(|v| v.ln()).collect();
    let v: Vec<f64> = errors.iter().map(|w| w.ln()).collect();
    let n = u.len() as f64;
    let ub = u.iter().sum::<f64>() / n;
    let vb = v.iter().sum::<f64>() / n;
    let sxx: f64 = u.iter().map(|ui| (ui - ub) * (ui - ub)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "rate fit needs at least two distinct sizes".into(),
        ));
    }
    let sxy: f64 = u.iter().zip(v.iter()).map(|(ui, vi)| (ui - ub) * (vi - vb)).sum();
    Ok(sxy / sxx)
}

/// Smooth a particle cloud into a kernel estimate with the median-trick
/// bandwidth, so clouds (including Langevin sample sets) can be scored by
/// the density metrics.
pub fn cloud_to_kde(cloud: &ParticleCloud, beta: f64) -> Result<KdeDensity> {
    crate::mirror_descent::smooth_cloud(cloud, &BandwidthSpec::MedianTrick { beta, factor: 0.1 })
}

/// Grid axes covering a cloud's support with `pad` weighted standard
/// deviations of margin on each side.
pub fn auto_axes(cloud: &ParticleCloud, cells_per_dim: usize, pad: f64) -> Result<Vec<GridAxis>> {
    if cloud.dim() == 0 || cloud.dim() > 2 {
        return Err(Error::InvalidArgument(format!(
            "grid axes support 1 or 2 dimensions, got {}",
            cloud.dim()
        )));
    }
    let std = cloud.weighted_std();
    let mut axes = Vec::with_capacity(cloud.dim());
    for j in 0..cloud.dim() {
        let col = cloud.points().column(j).to_owned();
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let margin = (pad * std[j]).max(1e-6 * (hi - lo).abs()).max(1e-6);
        axes.push(GridAxis::new(lo - margin, hi + margin, cells_per_dim)?);
    }
    Ok(axes)
}

/// Posterior-predictive classification accuracy of a weighted cloud on
/// held-out logistic rows: predict `y = 1` when `Σ α_i σ(θ_iᵀx) ≥ 1/2`.
pub fn predictive_accuracy(
    model: &LogisticRegression,
    cloud: &ParticleCloud,
    holdout: &Dataset,
) -> Result<f64> {
    model.check_data(holdout)?;
    if cloud.dim() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "cloud dimension {} does not match model dimension {}",
            cloud.dim(),
            model.dim()
        )));
    }
    let mut correct = 0usize;
    for r in 0..holdout.len() {
        let row = holdout.row(r);
        let (features, label) = row.split_at(model.num_features);
        let p = cloud.integral_estimate(|theta| {
            sigmoid(theta.iter().zip(features).map(|(t, x)| t * x).sum())
        });
        let predict_positive = p >= 0.5;
        let is_positive = label[0] > 0.0;
        if predict_positive == is_positive {
            correct += 1;
        }
    }
    Ok(correct as f64 / holdout.len() as f64)
}

/// Maximum a posteriori weights for logistic regression by damping-free
/// Newton iteration; the log posterior is strictly concave so this converges
/// quadratically from any start.
pub fn logistic_map(
    model: &LogisticRegression,
    data: &Dataset,
    max_iter: usize,
    tol: f64,
) -> Result<Array1<f64>> {
    model.check_data(data)?;
    let d = model.dim();
    let prior_precision = 1.0 / model.prior_var;
    let mut theta = Array1::<f64>::zeros(d);
    for _ in 0..max_iter {
        let mut grad = model.grad_log_prior(theta.as_slice().unwrap())?;
        let mut neg_hess = Array2::<f64>::eye(d) * prior_precision;
        for r in 0..data.len() {
            let row = data.row(r);
            grad += &model.grad_log_likelihood(theta.as_slice().unwrap(), row)?;
            let features = &row[..d];
            let margin: f64 = theta.iter().zip(features).map(|(t, x)| t * x).sum();
            // label-independent curvature weight σ(m)σ(−m)
            let w = sigmoid(margin) * sigmoid(-margin);
            for a in 0..d {
                for b in 0..d {
                    neg_hess[(a, b)] += w * features[a] * features[b];
                }
            }
        }
        let grad_norm = grad.iter().cloned().fold(0.0, |acc: f64, g| acc.max(g.abs()));
        if grad_norm < tol {
            return Ok(theta);
        }
        let step = solve_linear(neg_hess, grad)?;
        theta += &step;
    }
    Ok(theta)
}

/// Gaussian elimination with partial pivoting; `a` must be square and
/// nonsingular. Sized for the handful of dimensions the models use.
fn solve_linear(mut a: Array2<f64>, mut b: Array1<f64>) -> Result<Array1<f64>> {
    let n = b.len();
    debug_assert_eq!(a.nrows(), n);
    debug_assert_eq!(a.ncols(), n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|i, j| a[(*i, col)].abs().total_cmp(&a[(*j, col)].abs()))
            .expect("nonempty range");
        if a[(pivot, col)].abs() < 1e-12 {
            return Err(Error::InvalidArgument(
                "singular system in Newton step".into(),
            ));
        }
        if pivot != col {
            for k in 0..n {
                a.swap((col, k), (pivot, k));
            }
            b.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let f = a[(row, col)] / a[(col, col)];
            for k in col..n {
                a[(row, k)] -= f * a[(col, k)];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[(row, k)] * x[k];
        }
        x[row] = acc / a[(row, row)];
    }
    Ok(x)
}
