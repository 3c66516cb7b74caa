//! JSON experiment configurations.
//!
//! Schemas are strict: unknown keys are rejected so a typo cannot silently
//! fall back to a default. Relative paths inside a config are resolved
//! against the config file's own directory, then embedded absolute in the
//! run manifest so a rerun never depends on the working directory.

use enskit::aggregate::MeanKind;
use enskit::search::{SearchStrategy, SurrogateParams};
use enskit::simulator::Scheduler;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::CliError;

/// One synthetic family to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortFamilyConfig {
    pub family: String,
    pub num_classes: usize,
    pub num_examples: usize,
    pub num_models: usize,
    /// Explicit logit boost on the true class. Give this or
    /// `target_accuracy`, not both.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<f64>,
    /// Single-model accuracy to calibrate the signal to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
    pub correlation: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub families: Vec<CohortFamilyConfig>,
}

impl CohortConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.families.is_empty() {
            return Err(CliError::Config("no families configured".to_string()));
        }
        for f in &self.families {
            validate_name(&f.family, "family")?;
            match (f.signal, f.target_accuracy) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(format!(
                        "family `{}` sets both signal and target_accuracy",
                        f.family
                    )))
                }
                (None, None) => {
                    return Err(CliError::Config(format!(
                        "family `{}` needs either signal or target_accuracy",
                        f.family
                    )))
                }
                _ => {}
            }
        }
        let mut names: Vec<&str> = self.families.iter().map(|f| f.family.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.families.len() {
            return Err(CliError::Config("duplicate family names".to_string()));
        }
        Ok(())
    }
}

/// Aggregation rule selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub kind: MeanKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            kind: MeanKind::Geometric,
            epsilon: None,
        }
    }
}

/// One family's inputs for curve building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveFamilyConfig {
    /// Registry entry describing one member's cost; the curve is named
    /// after the entry's family.
    pub model_id: String,
    pub dumps: Vec<PathBuf>,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesConfig {
    pub registry: PathBuf,
    #[serde(default)]
    pub rule: RuleConfig,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_min_gain")]
    pub min_gain: f64,
    pub families: Vec<CurveFamilyConfig>,
}

fn default_replicates() -> usize {
    enskit::pareto::DEFAULT_REPLICATES
}

fn default_min_gain() -> f64 {
    enskit::pareto::DEFAULT_MIN_GAIN
}

impl CurvesConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.families.is_empty() {
            return Err(CliError::Config("no families configured".to_string()));
        }
        for f in &self.families {
            if f.dumps.is_empty() {
                return Err(CliError::Config(format!(
                    "family entry `{}` lists no dumps",
                    f.model_id
                )));
            }
        }
        Ok(())
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.registry);
        for f in &mut self.families {
            for d in &mut f.dumps {
                resolve(base, d);
            }
            resolve(base, &mut f.labels);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub registry: PathBuf,
    /// Registry model ids; repeats are allowed (duplicated members).
    pub members: Vec<String>,
    pub num_workers: usize,
    pub num_requests: usize,
    pub scheduler: Scheduler,
    #[serde(default)]
    pub agg_overhead_ms: f64,
}

impl SimulateConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.registry);
    }
}

/// Which architecture space to search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceChoice {
    #[default]
    Full,
    Reduced,
}

/// Surrogate knobs; the perturbation seed is derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub a_max: f64,
    pub half_sat_flops: f64,
    pub perturb_scale: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        let d = SurrogateParams::default();
        SurrogateConfig {
            a_max: d.a_max,
            half_sat_flops: d.half_sat_flops,
            perturb_scale: d.perturb_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default)]
    pub space: SpaceChoice,
    pub ensemble_size: usize,
    pub strategy: SearchStrategy,
    pub budget: usize,
    pub target_latency_ms: f64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    /// Evaluations per search inside the duplicate-vs-diverse comparison.
    #[serde(default = "default_comparison_budget")]
    pub comparison_budget: usize,
}

fn default_exponent() -> f64 {
    enskit::search::DEFAULT_REWARD_EXPONENT
}

fn default_comparison_budget() -> usize {
    200
}

fn validate_name(name: &str, what: &str) -> Result<(), CliError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} name `{name}` must be non-empty and use only [A-Za-z0-9_-]"
        )))
    }
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&path);
    }
}

/// Reads and strictly parses a JSON config file.
pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
