//! Dataset ingestion and synthetic generation.
//!
//! CSV layout: numeric columns, one observation per line, with an optional
//! header naming the columns; a header whose final column is `label` marks
//! labeled rows (the logistic model reads that column as its ±1 class).
//! Parsing is strict — any non-numeric or non-finite entry fails with the
//! offending line number rather than being dropped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use pmd::model::{sigmoid, Dataset};

use crate::config::ModelSpec;
use crate::error::{io_at, Error, Result};

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| io_at(path, e))?;
    let fail = |line: usize, message: String| Error::Dataset {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut count = 0usize;
    let mut last_line = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            tokens.iter().map(|t| t.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            // A non-numeric first line is the header; later ones are errors.
            Err(_) if count == 0 && width.is_none() && line == 1 => continue,
            Err(_) => {
                let bad = tokens
                    .iter()
                    .find(|t| t.parse::<f64>().is_err())
                    .expect("some token failed to parse");
                return Err(fail(line, format!("cannot parse {bad:?} as a number")));
            }
        };
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(fail(line, format!("non-finite value {v}")));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(fail(
                    line,
                    format!("row has {} values, expected {w}", values.len()),
                ));
            }
            Some(_) => {}
        }
        rows.extend_from_slice(&values);
        count += 1;
    }
    let width = width.ok_or_else(|| fail(last_line.max(1), "no data rows".into()))?;
    let array = ndarray::Array2::from_shape_vec((count, width), rows)
        .expect("width checked per row");
    Ok(Dataset::new(array)?)
}

/// Draw `n` i.i.d. observations from the model's forward distribution at the
/// fixed parameter vector `params`. The draw sequence is pinned per kind, so
/// a (kind, params, seed, n) tuple always produces byte-identical data.
pub fn generate_synthetic(
    model: &ModelSpec,
    params: &[f64],
    seed: u64,
    n: usize,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("synthetic data needs n >= 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let rows = match model {
        ModelSpec::ConjugateGaussian { obs_var, .. } => {
            let d = params.len();
            let sd = obs_var.sqrt();
            let mut rows = Vec::with_capacity(n * d);
            for _ in 0..n {
                for p in params {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    rows.push(p + sd * z);
                }
            }
            ndarray::Array2::from_shape_vec((n, d), rows).expect("row width d")
        }
        ModelSpec::TiedMixture { sigma_x, mix, .. } => {
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let center = if rng.random_bool(*mix) {
                    params[0]
                } else {
                    params[0] + params[1]
                };
                let z: f64 = StandardNormal.sample(&mut rng);
                rows.push(center + sigma_x * z);
            }
            ndarray::Array2::from_shape_vec((n, 1), rows).expect("scalar rows")
        }
        ModelSpec::Logistic { .. } => {
            let d = params.len();
            let mut rows = Vec::with_capacity(n * (d + 1));
            for _ in 0..n {
                let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let margin: f64 = params.iter().zip(&x).map(|(t, xi)| t * xi).sum();
                let y = if rng.random_bool(sigmoid(margin)) {
                    1.0
                } else {
                    -1.0
                };
                rows.extend_from_slice(&x);
                rows.push(y);
            }
            ndarray::Array2::from_shape_vec((n, d + 1), rows).expect("row width d+1")
        }
    };
    Ok(Dataset::new(rows)?)
}

/// Render a dataset in the CSV layout [`load_dataset`] reads back. Floats
/// use the shortest round-trip formatting, so the bytes are reproducible.
pub fn dataset_to_csv(data: &Dataset, labeled: bool) -> String {
    let d = data.row_dim();
    let mut out = String::new();
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        if labeled && j == d - 1 {
            out.push_str("label");
        } else {
            let _ = write!(out, "x{j}");
        }
    }
    out.push('\n');
    for i in 0..data.len() {
        for (j, v) in data.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}
