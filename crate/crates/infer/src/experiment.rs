//! Experiment orchestration: resolve the config, run the algorithm with its
//! diagnostics, and write every artifact atomically into the output
//! directory. Reruns of the same config produce byte-identical files — no
//! wall-clock or machine state leaks into any output.
//!
//! Artifacts per run directory:
//! - `config.toml` — the experiment as actually run (seeds made explicit)
//! - `data.csv` — the dataset used, training and holdout rows together
//! - `trace.jsonl` — one record per recorded iteration
//! - `curves.csv` — metric curves keyed by cumulative data visited
//! - `final_particles.csv` — final density state in the particle format
//! - `metrics.json` — flat final metric map, the input to `summarize`
//! - `grid.csv` — oracle vs estimate density per grid cell (grid runs only)

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pmd::density::{log_sum_exp, KdeDensity, ParticleCloud};
use pmd::diagnostics::{build_grid_oracle, cloud_to_kde, predictive_accuracy, GridOracle};
use pmd::mirror_descent::{run_pmd, RunResult};
use pmd::sgld::run_sgld;
use pmd::trace::DensityState;

use crate::config::{prepare, AlgorithmSpec, BuiltModel, ExperimentConfig, ModelSpec, Prepared};
use crate::dataset::dataset_to_csv;
use crate::error::{io_at, Error, Result};

/// Kernel width used when a particle-only state needs a density for grid
/// metrics; matches the conversion applied by the library's diagnostics.
const CLOUD_KDE_BETA: f64 = 2.0;

pub struct RunOutput {
    pub dir: PathBuf,
    pub metrics: BTreeMap<String, f64>,
}

/// Run one experiment into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    let prepared = prepare(config)?;
    let oracle = match &prepared.config.diagnostics.grid {
        Some(axes) => Some(build_grid_oracle(
            prepared.model.as_dyn(),
            &prepared.train,
            axes.clone(),
        )?),
        None => None,
    };

    let diag = make_diagnostic(&prepared, oracle.as_ref());
    let result = match &prepared.config.algorithm {
        AlgorithmSpec::Pmd(c) => run_pmd(prepared.model.as_dyn(), &prepared.train, c, diag.as_deref())?,
        AlgorithmSpec::Sgld(c) => {
            run_sgld(prepared.model.as_dyn(), &prepared.train, c, diag.as_deref())?
        }
    };

    let mut metrics = final_metrics(&prepared, oracle.as_ref(), &result)?;
    if let Some(last) = result.trace.last() {
        metrics.insert("ess".into(), last.ess);
        metrics.insert("data_visited".into(), last.data_visited as f64);
        metrics.insert("iterations".into(), last.t as f64);
    }

    fs::create_dir_all(out_dir).map_err(|e| io_at(out_dir, e))?;
    let labeled = matches!(prepared.config.model, ModelSpec::Logistic { .. });
    write_atomic(
        &out_dir.join("data.csv"),
        dataset_to_csv(&prepared.data, labeled).as_bytes(),
    )?;
    let mut resolved = prepared.config.clone();
    resolved.output = Some(out_dir.to_path_buf());
    write_atomic(
        &out_dir.join("config.toml"),
        toml::to_string_pretty(&resolved)?.as_bytes(),
    )?;
    let mut trace_bytes = Vec::new();
    result.trace.write_jsonl(&mut trace_bytes)?;
    write_atomic(&out_dir.join("trace.jsonl"), &trace_bytes)?;
    write_atomic(
        &out_dir.join("curves.csv"),
        curves_csv(&result).as_bytes(),
    )?;
    write_atomic(
        &out_dir.join("final_particles.csv"),
        particles_csv(&result.density.cloud()).as_bytes(),
    )?;
    write_atomic(
        &out_dir.join("metrics.json"),
        &serde_json::to_vec_pretty(&metrics)?,
    )?;
    if let Some(oracle) = &oracle {
        write_atomic(
            &out_dir.join("grid.csv"),
            grid_csv(oracle, &result.density)?.as_bytes(),
        )?;
    }
    Ok(RunOutput {
        dir: out_dir.to_path_buf(),
        metrics,
    })
}

/// Run `k` seeds concurrently under `out_root/seed-<s>/`, where seed `i`
/// shifts the configured algorithm seed by `i`. Data stays identical across
/// repeats; only the sampler stream moves.
pub fn run_repeats(config: &ExperimentConfig, out_root: &Path, k: u64) -> Result<Vec<RunOutput>> {
    if k == 0 {
        return Err(Error::Config("--repeat needs at least one run".into()));
    }
    let base = config.algorithm.rng_seed();
    let runs: Vec<(u64, ExperimentConfig, PathBuf)> = (0..k)
        .map(|i| {
            let seed = base + i;
            let mut c = config.clone();
            c.algorithm.set_rng_seed(seed);
            (seed, c, out_root.join(format!("seed-{seed}")))
        })
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|(_, c, dir)| scope.spawn(move || run_experiment(c, dir)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect()
    })
}

/// Per-iteration metric callback for the configured diagnostics, if any.
fn make_diagnostic<'a>(
    prepared: &'a Prepared,
    oracle: Option<&'a GridOracle>,
) -> Option<Box<dyn Fn(usize, &DensityState) -> BTreeMap<String, f64> + 'a>> {
    if let Some(oracle) = oracle {
        return Some(Box::new(move |_, state| {
            grid_metrics(oracle, state).unwrap_or_default()
        }));
    }
    if let Some(holdout) = &prepared.holdout {
        let BuiltModel::Logistic(model) = &prepared.model else {
            return None;
        };
        return Some(Box::new(move |_, state| {
            let mut out = BTreeMap::new();
            if let Ok(acc) = predictive_accuracy(model, &state.cloud(), holdout) {
                out.insert("predictive_accuracy".into(), acc);
            }
            out
        }));
    }
    None
}

fn grid_metrics(oracle: &GridOracle, state: &DensityState) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    let eval = |kde: &KdeDensity| -> Result<(f64, f64, f64)> {
        Ok((
            oracle.total_variation(|t| kde.log_density(t))?,
            oracle.cross_entropy(|t| kde.log_density(t))?,
            oracle.kl_divergence(|t| kde.log_density(t))?,
        ))
    };
    let (tv, ce, kl) = match state.kde() {
        Some(kde) => eval(kde)?,
        None => eval(&cloud_to_kde(&state.cloud(), CLOUD_KDE_BETA)?)?,
    };
    out.insert("tv".into(), tv);
    out.insert("cross_entropy".into(), ce);
    out.insert("kl".into(), kl);
    Ok(out)
}

fn final_metrics(
    prepared: &Prepared,
    oracle: Option<&GridOracle>,
    result: &RunResult,
) -> Result<BTreeMap<String, f64>> {
    if let Some(oracle) = oracle {
        let mut m = grid_metrics(oracle, &result.density)?;
        m.insert("oracle_entropy".into(), oracle.entropy());
        return Ok(m);
    }
    let mut m = BTreeMap::new();
    if let (Some(holdout), BuiltModel::Logistic(model)) = (&prepared.holdout, &prepared.model) {
        m.insert(
            "predictive_accuracy".into(),
            predictive_accuracy(model, &result.density.cloud(), holdout)?,
        );
    }
    Ok(m)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| io_at(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_at(path, e))?;
    Ok(())
}

/// Metric curves, one row per recorded iteration, keyed by cumulative data
/// visited so runs with different batch sizes share an x-axis.
fn curves_csv(result: &RunResult) -> String {
    let mut keys: Vec<&str> = Vec::new();
    for rec in &result.trace.records {
        for k in rec.metrics.keys() {
            if !keys.contains(&k.as_str()) {
                keys.push(k);
            }
        }
    }
    keys.sort_unstable();
    let mut out = String::from("data_visited,t,gamma,m,ess");
    for k in &keys {
        let _ = write!(out, ",{k}");
    }
    out.push('\n');
    for rec in &result.trace.records {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            rec.data_visited, rec.t, rec.gamma, rec.m, rec.ess
        );
        for k in &keys {
            out.push(',');
            if let Some(v) = rec.metrics.get(*k) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

fn particles_csv(cloud: &ParticleCloud) -> String {
    let d = cloud.dim();
    let mut out = String::new();
    for j in 0..d {
        let _ = write!(out, "theta{j},");
    }
    out.push_str("weight\n");
    let weights = cloud.weights();
    for (i, w) in weights.iter().enumerate() {
        for v in cloud.points().row(i) {
            let _ = write!(out, "{v},");
        }
        let _ = write!(out, "{w}");
        out.push('\n');
    }
    out
}

/// Per-cell oracle and estimate densities. The estimate uses the same
/// midpoint-and-renormalize convention as the total-variation metric.
fn grid_csv(oracle: &GridOracle, state: &DensityState) -> Result<String> {
    let owned;
    let kde = match state.kde() {
        Some(kde) => kde,
        None => {
            owned = cloud_to_kde(&state.cloud(), CLOUD_KDE_BETA)?;
            &owned
        }
    };
    let cells = oracle.num_cells();
    let mut log_est = Vec::with_capacity(cells);
    for c in 0..cells {
        log_est.push(kde.log_density(&oracle.cell_center(c)));
    }
    let log_norm = log_sum_exp(&log_est)?;
    let volume = oracle.log_cell_volume().exp();
    let dim = oracle.dim();
    let mut out = String::new();
    for j in 0..dim {
        let _ = write!(out, "theta{j},");
    }
    out.push_str("oracle,estimate\n");
    for c in 0..cells {
        for v in oracle.cell_center(c) {
            let _ = write!(out, "{v},");
        }
        let oracle_density = oracle.mass(c) / volume;
        let est_density = (log_est[c] - log_norm).exp() / volume;
        let _ = writeln!(out, "{oracle_density},{est_density}");
    }
    Ok(out)
}
