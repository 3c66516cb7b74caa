//! FLOPs and latency accounting for single models and ensembles.
//!
//! FLOPs are taken from a registry file (counted as multiply-adds), never
//! recomputed. Latency is modeled per profile as either a constant or a
//! log-normal distribution around a median; ensembles run members either
//! sequentially (latencies add) or in parallel (the slowest member gates).

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a model's latency distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyKind {
    Constant,
    LogNormal,
}

/// Per-forward-pass latency model: a median plus log-space dispersion.
/// `Constant` is the degenerate case `sigma_log = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyDist {
    pub kind: LatencyKind,
    pub p50_ms: f64,
    pub sigma_log: f64,
}

impl LatencyDist {
    pub fn constant(p50_ms: f64) -> Self {
        LatencyDist {
            kind: LatencyKind::Constant,
            p50_ms,
            sigma_log: 0.0,
        }
    }

    pub fn log_normal(p50_ms: f64, sigma_log: f64) -> Self {
        LatencyDist {
            kind: LatencyKind::LogNormal,
            p50_ms,
            sigma_log,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p50_ms.is_finite() && self.p50_ms > 0.0) {
            return Err(Error::NonPositiveLatency(self.p50_ms));
        }
        if !(self.sigma_log.is_finite() && self.sigma_log >= 0.0) {
            return Err(Error::InvalidProfile {
                model_id: String::new(),
                reason: format!("sigma_log {} must be a finite non-negative value", self.sigma_log),
            });
        }
        if self.kind == LatencyKind::Constant && self.sigma_log != 0.0 {
            return Err(Error::InvalidProfile {
                model_id: String::new(),
                reason: "constant latency requires sigma_log = 0".to_string(),
            });
        }
        Ok(())
    }

    /// Draws one latency sample in milliseconds. A constant distribution
    /// returns the median without consuming randomness; a log-normal one
    /// returns `p50 * exp(sigma_log * z)` with standard-normal `z`, so the
    /// median is `p50_ms` by construction.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            LatencyKind::Constant => self.p50_ms,
            LatencyKind::LogNormal => {
                let z: f64 = rng.sample(StandardNormal);
                self.p50_ms * (self.sigma_log * z).exp()
            }
        }
    }
}

/// Registry entry for one model: identity, compute cost, latency model, and
/// (optionally) a published accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: String,
    pub family: String,
    pub scale_tag: String,
    /// Multiply-adds per forward pass.
    pub flops: u64,
    #[serde(rename = "latency")]
    pub latency_ms: LatencyDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_accuracy: Option<f64>,
}

impl ModelProfile {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidProfile {
            model_id: self.model_id.clone(),
            reason,
        };
        if self.model_id.is_empty() {
            return Err(invalid("model_id is empty".to_string()));
        }
        if self.flops == 0 {
            return Err(invalid("flops must be positive".to_string()));
        }
        self.latency_ms.validate().map_err(|e| match e {
            Error::InvalidProfile { reason, .. } => invalid(reason),
            Error::NonPositiveLatency(v) => invalid(format!("p50_ms {v} must be positive")),
            other => other,
        })?;
        if let Some(acc) = self.measured_accuracy {
            if !(acc.is_finite() && (0.0..=1.0).contains(&acc)) {
                return Err(invalid(format!("measured_accuracy {acc} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Loads and validates a model registry (a JSON array of profiles).
/// Model ids must be unique.
pub fn load_registry(path: impl AsRef<Path>) -> Result<Vec<ModelProfile>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let profiles: Vec<ModelProfile> =
        serde_json::from_str(&text).map_err(|source| Error::MalformedRegistry {
            path: path.to_path_buf(),
            source,
        })?;
    let mut seen = std::collections::HashSet::new();
    for profile in &profiles {
        profile.validate()?;
        if !seen.insert(profile.model_id.as_str()) {
            return Err(Error::InvalidProfile {
                model_id: profile.model_id.clone(),
                reason: "duplicate model_id in registry".to_string(),
            });
        }
    }
    Ok(profiles)
}

/// Total FLOPs of an ensemble: the members' costs add because every member
/// runs a full forward pass per example.
pub fn ensemble_flops(profiles: &[&ModelProfile]) -> Result<u64> {
    if profiles.is_empty() {
        return Err(Error::EmptyMemberList);
    }
    let mut total: u64 = 0;
    for profile in profiles {
        total = total.checked_add(profile.flops).ok_or_else(|| {
            Error::InvariantViolation("ensemble FLOPs overflow u64".to_string())
        })?;
    }
    Ok(total)
}

/// Wall-clock for running the members one after another on a single worker.
pub fn sequential_latency_ms(samples: &[f64]) -> f64 {
    samples.iter().sum()
}

/// Wall-clock for running every member concurrently on its own worker: the
/// slowest member gates the response.
pub fn parallel_latency_ms(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0, |acc, &v| acc.max(v))
}
