//! Aggregate repeated runs: per-metric medians across `seed-*` directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{io_at, Error, Result};

#[derive(Debug, Serialize)]
pub struct Summary {
    pub runs: usize,
    pub medians: BTreeMap<String, f64>,
}

/// Median over the `metrics.json` files found under `dir`: every
/// `seed-*/metrics.json`, or the directory's own `metrics.json` for a
/// single un-repeated run.
pub fn summarize_dir(dir: &Path) -> Result<Summary> {
    let mut files: Vec<PathBuf> = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| io_at(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_at(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if name.starts_with("seed-") {
            let candidate = entry.path().join("metrics.json");
            if candidate.is_file() {
                files.push(candidate);
            }
        }
    }
    if files.is_empty() {
        let single = dir.join("metrics.json");
        if single.is_file() {
            files.push(single);
        }
    }
    if files.is_empty() {
        return Err(Error::Summarize(format!(
            "no seed-*/metrics.json or metrics.json under {}",
            dir.display()
        )));
    }
    files.sort();
    let mut by_key: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for file in &files {
        let text = fs::read_to_string(file).map_err(|e| io_at(file, e))?;
        let metrics: BTreeMap<String, f64> = serde_json::from_str(&text)?;
        for (k, v) in metrics {
            by_key.entry(k).or_default().push(v);
        }
    }
    let medians = by_key
        .into_iter()
        .map(|(k, mut vs)| {
            vs.sort_by(f64::total_cmp);
            (k, median_of_sorted(&vs))
        })
        .collect();
    Ok(Summary {
        runs: files.len(),
        medians,
    })
}

fn median_of_sorted(vs: &[f64]) -> f64 {
    let n = vs.len();
    if n % 2 == 1 {
        vs[n / 2]
    } else {
        0.5 * (vs[n / 2 - 1] + vs[n / 2])
    }
}
