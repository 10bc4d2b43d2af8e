//! Per-iteration trace records and the final density snapshot.
//!
//! Serialized traces must be byte-identical across runs with the same seed,
//! so metric maps are ordered (`BTreeMap`) and wall-clock time is carried
//! in memory but never serialized.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::density::{KdeDensity, ParticleCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub gamma: f64,
    pub m: usize,
    pub ess: f64,
    /// Cumulative count of data rows consumed up to and including iteration `t`.
    pub data_visited: usize,
    /// Diagnostic values keyed by metric name, flattened into the record.
    #[serde(flatten)]
    pub metrics: BTreeMap<String, f64>,
    /// Elapsed seconds since the run started; in-memory only.
    #[serde(skip)]
    pub wall_secs: f64,
    /// Density iterate at this iteration; in-memory only (the serialized
    /// trace carries scalars, the final density goes to the particle CSV).
    #[serde(skip)]
    pub state: Option<DensityState>,
}

#[derive(Debug, Clone, Default)]
pub struct InferenceTrace {
    pub records: Vec<TraceRecord>,
}

impl InferenceTrace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// One JSON object per line, in iteration order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for rec in &self.records {
            let line = serde_json::to_string(rec)
                .map_err(|e| Error::InvalidArgument(format!("trace serialization: {e}")))?;
            writeln!(w, "{line}").map_err(|e| Error::InvalidArgument(format!("trace io: {e}")))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidData(format!("trace io: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TraceRecord = serde_json::from_str(&line)
                .map_err(|e| Error::InvalidData(format!("trace line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Ok(Self { records })
    }
}

/// Final density produced by a run: either the bare weighted support or a
/// smoothed kernel estimate that can be evaluated and sampled.
#[derive(Debug, Clone)]
pub enum DensityState {
    Particles(ParticleCloud),
    Smoothed(KdeDensity),
}

impl DensityState {
    /// Support points with weights, dropping any smoothing.
    pub fn cloud(&self) -> ParticleCloud {
        match self {
            Self::Particles(c) => c.clone(),
            Self::Smoothed(k) => k.to_cloud(),
        }
    }

    pub fn kde(&self) -> Option<&KdeDensity> {
        match self {
            Self::Smoothed(k) => Some(k),
            Self::Particles(_) => None,
        }
    }
}

/// Iterations at which diagnostics are recorded when no explicit list is
/// given: powers of two plus the final iteration.
pub fn default_record_iterations(horizon: usize) -> Vec<usize> {
    let mut ts = Vec::new();
    let mut t = 1usize;
    while t <= horizon {
        ts.push(t);
        match t.checked_mul(2) {
            Some(next) => t = next,
            None => break,
        }
    }
    if ts.last() != Some(&horizon) {
        ts.push(horizon);
    }
    ts
}
