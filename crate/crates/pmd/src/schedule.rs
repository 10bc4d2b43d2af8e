//! Step-size and particle-count schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step-size rule producing `γ_t ∈ (0, 1]` for iteration `t ≥ 1`.
///
/// `InverseT` is the classic `η/t` decay for strongly convex objectives.
/// `ParticleAdaptive` additionally caps the step by the particle budget:
/// `γ_t = min(2/(t+1), δ / (M · m_t^{β/(d+2β)}))`, so more particles (a more
/// trustworthy density estimate) permit larger steps. `δ` plays the role of
/// an accuracy target and `M` bounds the stochastic gradient magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StepSchedule {
    InverseT { eta: f64 },
    ParticleAdaptive { delta: f64, grad_bound: f64, beta: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::InverseT { eta } => {
                if !(*eta > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "step schedule eta must be positive, got {eta}"
                    )));
                }
            }
            Self::ParticleAdaptive {
                delta,
                grad_bound,
                beta,
            } => {
                for (name, v) in [("delta", delta), ("grad_bound", grad_bound), ("beta", beta)] {
                    if !(*v > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "step schedule {name} must be positive, got {v}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Step size at iteration `t ≥ 1` given the current particle count `m`
    /// and parameter dimension `d`. Always clamped to at most 1, since the
    /// prox-mapping exponents `1-γ` and `γ` must stay in `[0, 1]`.
    pub fn stepsize(&self, t: usize, m: usize, d: usize) -> f64 {
        debug_assert!(t >= 1);
        let raw = match self {
            Self::InverseT { eta } => eta / t as f64,
            Self::ParticleAdaptive {
                delta,
                grad_bound,
                beta,
            } => {
                let exponent = beta / (d as f64 + 2.0 * beta);
                let particle_cap = delta / (grad_bound * (m as f64).powf(exponent));
                (2.0 / (t as f64 + 1.0)).min(particle_cap)
            }
        };
        raw.min(1.0)
    }
}

/// Particle budget per iteration, `m_t ≥ 1` for `t ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParticleSchedule {
    Fixed { m: usize },
    /// `m_t = m0 · t`.
    Linear { m0: usize },
    /// `m_t = ceil(m0 · t^exponent)`; used when theory asks for a
    /// polynomially growing budget.
    Power { m0: usize, exponent: f64 },
}

impl ParticleSchedule {
    pub fn validate(&self) -> Result<()> {
        let start = match self {
            Self::Fixed { m } => *m,
            Self::Linear { m0 } => *m0,
            Self::Power { m0, exponent } => {
                if !(*exponent >= 0.0) || !exponent.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "particle schedule exponent must be nonnegative, got {exponent}"
                    )));
                }
                *m0
            }
        };
        if start == 0 {
            return Err(Error::InvalidParameter(
                "particle schedule must start at m >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn size(&self, t: usize) -> usize {
        debug_assert!(t >= 1);
        match self {
            Self::Fixed { m } => *m,
            Self::Linear { m0 } => m0 * t,
            Self::Power { m0, exponent } => {
                let v = (*m0 as f64) * (t as f64).powf(*exponent);
                v.ceil() as usize
            }
        }
    }
}
