//! Synthetic classifier cohorts with controllable accuracy and error
//! correlation.
//!
//! Each cohort stands in for a family of independently trained replicas of
//! one architecture. The generative model is additive Gaussian logit noise
//! with a shared/independent variance split:
//!
//! ```text
//! z_ijc = s·[c = y_i] + sqrt(ρ)·g_ic + sqrt(1−ρ)·h_ijc
//! p_ij  = softmax(z_ij / τ)
//! ```
//!
//! where `g_i` is drawn once per example (shared by all models) and `h_ij`
//! per (example, model). The `sqrt(ρ)/sqrt(1−ρ)` weights keep the total
//! noise variance at 1 for every ρ, so the signal strength `s` alone sets
//! single-model accuracy while ρ only moves error overlap between models:
//! ρ=0 gives fully independent errors, ρ=1 bitwise-identical models.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::PredictionSet;
use crate::rng::{derive_rng, derive_seed, tag};

const TAG_LABELS: u64 = tag("cohort-labels");
const TAG_SHARED: u64 = tag("cohort-shared");
const TAG_INDEP: u64 = tag("cohort-indep");
const TAG_CALIBRATE: u64 = tag("cohort-calibrate");

/// Examples used for each Monte Carlo probe during signal calibration.
pub const CALIBRATION_EXAMPLES: usize = 50_000;

/// Full description of a synthetic cohort. Identical specs (seed included)
/// generate bit-identical cohorts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub num_classes: usize,
    pub num_examples: usize,
    pub num_models: usize,
    /// Logit boost on the true class.
    pub signal: f64,
    /// Fraction of noise variance shared across models, in [0, 1].
    pub correlation: f64,
    /// Softmax temperature.
    pub temperature: f64,
    pub seed: u64,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidCohortSpec(reason.to_string());
        if self.num_classes < 2 {
            return Err(invalid("num_classes must be >= 2"));
        }
        if self.num_examples < 1 {
            return Err(invalid("num_examples must be >= 1"));
        }
        if self.num_models < 1 {
            return Err(invalid("num_models must be >= 1"));
        }
        if !(self.signal.is_finite() && self.signal >= 0.0) {
            return Err(invalid("signal must be a finite value >= 0"));
        }
        if !(self.correlation.is_finite() && (0.0..=1.0).contains(&self.correlation)) {
            return Err(invalid("correlation must lie in [0, 1]"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(invalid("temperature must be positive"));
        }
        Ok(())
    }
}

fn softmax_in_place(logits: &mut [f64], temperature: f64) {
    let mut max = f64::NEG_INFINITY;
    for v in logits.iter_mut() {
        *v /= temperature;
        max = max.max(*v);
    }
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Generates the cohort's prediction sets (model ids `m00`, `m01`, ...) and
/// ground-truth labels.
///
/// All randomness is keyed by (seed, example, model), never by iteration
/// order, so the parallel generation below is bit-identical to a serial one.
pub fn generate_cohort(spec: &CohortSpec) -> Result<(Vec<PredictionSet>, Vec<usize>)> {
    spec.validate()?;
    let (num_classes, num_models) = (spec.num_classes, spec.num_models);
    let shared_weight = spec.correlation.sqrt();
    let indep_weight = (1.0 - spec.correlation).sqrt();

    // One block per example: its label plus the n softmax rows.
    let blocks: Vec<(usize, Vec<f64>)> = (0..spec.num_examples)
        .into_par_iter()
        .map(|i| {
            let example = i as u64;
            let label = derive_rng(spec.seed, &[TAG_LABELS, example])
                .random_range(0..num_classes);
            let mut shared_rng = derive_rng(spec.seed, &[TAG_SHARED, example]);
            let shared: Vec<f64> = (0..num_classes)
                .map(|_| shared_rng.sample(StandardNormal))
                .collect();

            let mut rows = vec![0.0f64; num_models * num_classes];
            for j in 0..num_models {
                let mut indep_rng = derive_rng(spec.seed, &[TAG_INDEP, example, j as u64]);
                let row = &mut rows[j * num_classes..(j + 1) * num_classes];
                for (c, slot) in row.iter_mut().enumerate() {
                    let indep: f64 = indep_rng.sample(StandardNormal);
                    let boost = if c == label { spec.signal } else { 0.0 };
                    *slot = boost + shared_weight * shared[c] + indep_weight * indep;
                }
                softmax_in_place(row, spec.temperature);
            }
            (label, rows)
        })
        .collect();

    let mut labels = Vec::with_capacity(spec.num_examples);
    let mut flats: Vec<Vec<f64>> =
        vec![Vec::with_capacity(spec.num_examples * num_classes); num_models];
    for (label, rows) in blocks {
        labels.push(label);
        for (j, flat) in flats.iter_mut().enumerate() {
            flat.extend_from_slice(&rows[j * num_classes..(j + 1) * num_classes]);
        }
    }

    let members = flats
        .into_iter()
        .enumerate()
        .map(|(j, flat)| {
            PredictionSet::from_flat(
                format!("m{j:02}"),
                spec.num_examples,
                num_classes,
                flat,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((members, labels))
}

/// Monte Carlo estimate of single-model accuracy at the given signal level,
/// using `num_examples` fresh examples under the cohort generative model.
pub fn estimate_single_accuracy(
    signal: f64,
    num_classes: usize,
    correlation: f64,
    seed: u64,
    num_examples: usize,
) -> Result<f64> {
    let spec = CohortSpec {
        num_classes,
        num_examples,
        num_models: 1,
        signal,
        correlation,
        temperature: 1.0,
        seed,
    };
    let (members, labels) = generate_cohort(&spec)?;
    members[0].top1_accuracy(&labels)
}

/// Finds the signal level whose single-model accuracy matches
/// `target_accuracy`, by bisection over [0, 50].
///
/// Every probe reuses the same seeded noise (derived from `seed`), which
/// makes the estimated accuracy a monotone step function of the signal and
/// the bisection deterministic. The probe noise lives in its own stream
/// namespace, so calibration never aliases the cohort that will later be
/// generated from the same seed. Accepts when the estimate lands within
/// ±0.005 of the target (normally much closer); errors if 40 halvings
/// cannot get there.
pub fn calibrate_signal(
    target_accuracy: f64,
    num_classes: usize,
    correlation: f64,
    temperature: f64,
    seed: u64,
) -> Result<f64> {
    // Temperature rescales logits uniformly, so it cannot move the argmax;
    // it is range-checked like any other cohort field but has no effect on
    // the calibrated accuracy.
    let probe_spec = CohortSpec {
        num_classes,
        num_examples: CALIBRATION_EXAMPLES,
        num_models: 1,
        signal: 0.0,
        correlation,
        temperature,
        seed: 0,
    };
    probe_spec.validate()?;
    let chance = 1.0 / num_classes as f64;
    if !(target_accuracy > chance && target_accuracy < 0.999) {
        return Err(Error::CalibrationTargetOutOfRange {
            target: target_accuracy,
            num_classes,
        });
    }

    let probe_seed = derive_seed(seed, &[TAG_CALIBRATE]);
    let estimate = |signal: f64| -> Result<f64> {
        estimate_single_accuracy(
            signal,
            num_classes,
            correlation,
            probe_seed,
            CALIBRATION_EXAMPLES,
        )
    };

    let (mut lo, mut hi) = (0.0f64, 50.0f64);
    let mut best_signal = 0.0;
    let mut best_estimate = f64::NAN;
    let mut best_abs_err = f64::INFINITY;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let acc = estimate(mid)?;
        let err = acc - target_accuracy;
        if err.abs() < best_abs_err {
            best_abs_err = err.abs();
            best_signal = mid;
            best_estimate = acc;
        }
        if err.abs() <= 0.001 {
            return Ok(mid);
        }
        if err < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best_abs_err <= 0.005 {
        Ok(best_signal)
    } else {
        Err(Error::CalibrationNonConvergence {
            iterations: 40,
            estimate: best_estimate,
        })
    }
}
