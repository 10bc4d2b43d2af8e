//! Experiment configuration: one TOML file describes one experiment — the
//! model, where its data comes from, the algorithm with its full settings,
//! and which diagnostics to report. Seeds are always explicit so a config
//! file pins the entire run.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use pmd::diagnostics::GridAxis;
use pmd::mirror_descent::PmdConfig;
use pmd::model::{
    make_conjugate_gaussian, make_logistic, make_tied_mixture, ConjugateGaussian, Dataset,
    LogisticRegression, Model, TiedMixture,
};
use pmd::sgld::SgldConfig;

use crate::dataset::{generate_synthetic, load_dataset};
use crate::error::{io_at, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Global seed: the default for synthetic data generation.
    pub seed: u64,
    /// Default output directory; `--out` and `INFER_OUT` override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub model: ModelSpec,
    pub data: DataSpec,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    ConjugateGaussian {
        prior_mean: Vec<f64>,
        prior_var: f64,
        obs_var: f64,
    },
    TiedMixture {
        sigma1: f64,
        sigma2: f64,
        sigma_x: f64,
        mix: f64,
    },
    Logistic {
        prior_var: f64,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ConjugateGaussian { .. } => "conjugate_gaussian",
            Self::TiedMixture { .. } => "tied_mixture",
            Self::Logistic { .. } => "logistic",
        }
    }

    /// Parameter dimension, where known without data. Logistic models size
    /// themselves from the dataset (features plus one label column).
    fn static_dim(&self) -> Option<usize> {
        match self {
            Self::ConjugateGaussian { prior_mean, .. } => Some(prior_mean.len()),
            Self::TiedMixture { .. } => Some(2),
            Self::Logistic { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// CSV file, resolved relative to the config file's directory.
    Csv { path: PathBuf },
    /// Draw `n` i.i.d. rows from the model's forward distribution at fixed
    /// parameters. The seed defaults to the experiment's global seed.
    Synthetic {
        n: usize,
        params: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Pmd(PmdConfig),
    Sgld(SgldConfig),
}

impl AlgorithmSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Pmd(_) => "pmd",
            Self::Sgld(_) => "sgld",
        }
    }

    pub fn rng_seed(&self) -> u64 {
        match self {
            Self::Pmd(c) => c.rng_seed,
            Self::Sgld(c) => c.rng_seed,
        }
    }

    pub fn set_rng_seed(&mut self, seed: u64) {
        match self {
            Self::Pmd(c) => c.rng_seed = seed,
            Self::Sgld(c) => c.rng_seed = seed,
        }
    }

    fn batch_size(&self) -> usize {
        match self {
            Self::Pmd(c) => c.batch_size,
            Self::Sgld(c) => c.batch_size,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Pmd(c) => c.validate()?,
            Self::Sgld(c) => c.validate()?,
        }
        Ok(())
    }
}

/// What to measure against the run. `grid` builds a brute-force posterior
/// oracle (models of dimension ≤ 2) and reports total variation and cross
/// entropy per recorded iteration; `holdout` withholds a fraction of the
/// data and reports posterior-predictive accuracy (logistic models).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<GridAxis>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<f64>,
}

impl ExperimentConfig {
    /// Parse a config file. Relative CSV paths are resolved against the
    /// config file's own directory so that configs travel with their data.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_at(path, e))?;
        let mut config: Self = toml::from_str(&text)?;
        if let DataSpec::Csv { path: csv } = &mut config.data {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&csv);
                }
            }
        }
        Ok(config)
    }

    /// Structural checks that need no data access.
    pub fn validate_shape(&self) -> Result<()> {
        self.algorithm.validate()?;
        match &self.model {
            ModelSpec::ConjugateGaussian {
                prior_mean,
                prior_var,
                obs_var,
            } => {
                if prior_mean.is_empty() {
                    return Err(Error::Config("prior_mean must be non-empty".into()));
                }
                if !(*prior_var > 0.0) || !(*obs_var > 0.0) {
                    return Err(Error::Config(format!(
                        "variances must be positive, got prior_var={prior_var}, obs_var={obs_var}"
                    )));
                }
            }
            ModelSpec::TiedMixture { .. } | ModelSpec::Logistic { .. } => {}
        }
        if let DataSpec::Synthetic { n, params, .. } = &self.data {
            if *n == 0 {
                return Err(Error::Config("synthetic data needs n >= 1".into()));
            }
            if params.is_empty() {
                return Err(Error::Config("synthetic data needs parameters".into()));
            }
            if let Some(d) = self.model.static_dim() {
                if params.len() != d {
                    return Err(Error::Config(format!(
                        "model {} takes {} parameters, got {}",
                        self.model.kind(),
                        d,
                        params.len()
                    )));
                }
            }
        }
        if let (Some(_), Some(_)) = (&self.diagnostics.grid, &self.diagnostics.holdout) {
            return Err(Error::Config(
                "choose either grid or holdout diagnostics, not both".into(),
            ));
        }
        if let Some(axes) = &self.diagnostics.grid {
            if axes.is_empty() || axes.len() > 2 {
                return Err(Error::Config(format!(
                    "grid diagnostics support 1 or 2 axes, got {}",
                    axes.len()
                )));
            }
            for axis in axes {
                axis.validate()?;
            }
        }
        if let Some(f) = self.diagnostics.holdout {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!(
                    "holdout fraction must lie in (0, 1), got {f}"
                )));
            }
            if !matches!(self.model, ModelSpec::Logistic { .. }) {
                return Err(Error::Config(
                    "holdout accuracy is defined for logistic models".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One of the three supported models, built and checked against its data.
#[derive(Debug)]
pub enum BuiltModel {
    Gaussian(ConjugateGaussian),
    Mixture(TiedMixture),
    Logistic(LogisticRegression),
}

impl BuiltModel {
    pub fn as_dyn(&self) -> &dyn Model {
        match self {
            Self::Gaussian(m) => m,
            Self::Mixture(m) => m,
            Self::Logistic(m) => m,
        }
    }

    pub fn dim(&self) -> usize {
        self.as_dyn().dim()
    }
}

/// Everything `run_experiment` needs, materialized and cross-checked; the
/// `validate` subcommand stops here, before any inference or oracle work.
#[derive(Debug)]
pub struct Prepared {
    /// The config as actually run: synthetic data seed made explicit.
    pub config: ExperimentConfig,
    /// Full dataset, as loaded or generated (training plus holdout).
    pub data: Dataset,
    pub train: Dataset,
    pub holdout: Option<Dataset>,
    pub model: BuiltModel,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate_shape()?;
    let mut resolved = config.clone();
    let data = match &mut resolved.data {
        DataSpec::Csv { path } => load_dataset(path)?,
        DataSpec::Synthetic { n, params, seed } => {
            let s = seed.unwrap_or(resolved.seed);
            *seed = Some(s);
            generate_synthetic(&resolved.model, params, s, *n)?
        }
    };
    let (train, holdout) = split_holdout(&data, resolved.diagnostics.holdout, resolved.seed)?;
    if resolved.algorithm.batch_size() > train.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {} training rows",
            resolved.algorithm.batch_size(),
            train.len()
        )));
    }
    let model = build_model(&resolved.model, &train)?;
    if let Some(axes) = &resolved.diagnostics.grid {
        if axes.len() != model.dim() {
            return Err(Error::Config(format!(
                "grid has {} axes but the model has {} parameters",
                axes.len(),
                model.dim()
            )));
        }
    }
    if let Some(h) = &holdout {
        model.as_dyn().check_data(h)?;
    }
    Ok(Prepared {
        config: resolved,
        data,
        train,
        holdout,
        model,
    })
}

fn build_model(spec: &ModelSpec, train: &Dataset) -> Result<BuiltModel> {
    Ok(match spec {
        ModelSpec::ConjugateGaussian {
            prior_mean,
            prior_var,
            obs_var,
        } => BuiltModel::Gaussian(make_conjugate_gaussian(
            Array1::from_vec(prior_mean.clone()),
            *prior_var,
            *obs_var,
            train,
        )?),
        ModelSpec::TiedMixture {
            sigma1,
            sigma2,
            sigma_x,
            mix,
        } => BuiltModel::Mixture(make_tied_mixture(*sigma1, *sigma2, *sigma_x, *mix, train)?),
        ModelSpec::Logistic { prior_var } => {
            BuiltModel::Logistic(make_logistic(train, *prior_var)?)
        }
    })
}

/// Withhold `round(fraction·N)` rows (at least one, never all) by a seeded
/// shuffle, so CSV row order cannot leak into the split.
fn split_holdout(
    data: &Dataset,
    fraction: Option<f64>,
    seed: u64,
) -> Result<(Dataset, Option<Dataset>)> {
    let Some(fraction) = fraction else {
        return Ok((data.clone(), None));
    };
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let n = data.len();
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1));
    if n < 2 {
        return Err(Error::Config(
            "holdout split needs at least two data rows".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let pick = |idx: &[usize]| -> Result<Dataset> {
        let d = data.row_dim();
        let mut flat = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            flat.extend_from_slice(data.row(i));
        }
        let rows = ndarray::Array2::from_shape_vec((idx.len(), d), flat)
            .expect("index selection preserves the row shape");
        Ok(Dataset::new(rows)?)
    };
    let train = pick(&order[k..])?;
    let held = pick(&order[..k])?;
    Ok((train, Some(held)))
}
