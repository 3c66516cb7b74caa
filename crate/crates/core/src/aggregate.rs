//! Ensemble aggregation: combine several prediction sets into one.
//!
//! The primary combiner is the element-wise geometric mean, computed in log
//! space for stability: each output cell is `exp(mean of ln(max(y_i, eps)))`
//! with the sum taken in ascending member order, and each row renormalized
//! to sum 1 afterwards. The arithmetic mean is available as a comparator.

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::PredictionSet;

/// Default floor applied to probabilities before taking logs. Keeps the
/// geometric mean defined when a member assigns an exact zero.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Which mean combines the members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanKind {
    Geometric,
    Arithmetic,
}

/// A validated aggregation recipe: the mean to use plus the zero floor for
/// the geometric case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationRule {
    pub kind: MeanKind,
    pub epsilon: f64,
}

impl AggregationRule {
    pub fn geometric() -> Self {
        AggregationRule {
            kind: MeanKind::Geometric,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn arithmetic() -> Self {
        AggregationRule {
            kind: MeanKind::Arithmetic,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(kind: MeanKind, epsilon: f64) -> Result<Self> {
        let rule = AggregationRule { kind, epsilon };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-6) {
            return Err(Error::InvalidEpsilon(self.epsilon));
        }
        Ok(())
    }
}

fn validate_members<S: Borrow<PredictionSet>>(members: &[S]) -> Result<(usize, usize)> {
    let first = members.first().ok_or(Error::EmptyMemberList)?.borrow();
    let (num_examples, num_classes) = (first.num_examples, first.num_classes);
    for (index, member) in members.iter().enumerate().skip(1) {
        let m = member.borrow();
        if m.num_examples != num_examples || m.num_classes != num_classes {
            return Err(Error::ShapeMismatch {
                index,
                expected_examples: num_examples,
                expected_classes: num_classes,
                found_examples: m.num_examples,
                found_classes: m.num_classes,
            });
        }
    }
    Ok((num_examples, num_classes))
}

fn ensemble_id<S: Borrow<PredictionSet>>(prefix: &str, members: &[S]) -> String {
    let ids: Vec<&str> = members.iter().map(|m| m.borrow().model_id.as_str()).collect();
    format!("{prefix}({})", ids.join("+"))
}

/// Element-wise geometric mean before row renormalization. Each cell is
/// `exp((1/n) * Σ ln(max(y_i, epsilon)))` with the sum in member order.
/// Exposed so tests can check the pre-renormalization values directly.
pub fn geometric_mean_raw<S: Borrow<PredictionSet>>(
    members: &[S],
    epsilon: f64,
) -> Result<Vec<f64>> {
    AggregationRule::with_epsilon(MeanKind::Geometric, epsilon)?;
    let (num_examples, num_classes) = validate_members(members)?;
    let cells = num_examples * num_classes;
    let mut log_sum = vec![0.0f64; cells];
    for member in members {
        for (acc, &y) in log_sum.iter_mut().zip(member.borrow().as_flat()) {
            *acc += y.max(epsilon).ln();
        }
    }
    let inv_n = 1.0 / members.len() as f64;
    Ok(log_sum.into_iter().map(|s| (s * inv_n).exp()).collect())
}

/// Element-wise geometric mean of the members, rows renormalized to sum 1.
/// A single member is returned unchanged (bit-for-bit).
pub fn geometric_mean<S: Borrow<PredictionSet>>(
    members: &[S],
    epsilon: f64,
) -> Result<PredictionSet> {
    if members.len() == 1 {
        AggregationRule::with_epsilon(MeanKind::Geometric, epsilon)?;
        return Ok(members[0].borrow().clone());
    }
    let (num_examples, num_classes) = {
        let first = members.first().ok_or(Error::EmptyMemberList)?.borrow();
        (first.num_examples, first.num_classes)
    };
    let mut flat = geometric_mean_raw(members, epsilon)?;
    for row in flat.chunks_exact_mut(num_classes) {
        let sum: f64 = row.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::InvariantViolation(format!(
                "geometric-mean row sum {sum} is not a positive finite number"
            )));
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    PredictionSet::from_flat(
        ensemble_id("geo", members),
        num_examples,
        num_classes,
        flat,
    )
}

/// Element-wise arithmetic mean of the members. Rows of valid members
/// already sum to 1, so no renormalization is applied.
pub fn arithmetic_mean<S: Borrow<PredictionSet>>(members: &[S]) -> Result<PredictionSet> {
    if members.len() == 1 {
        return Ok(members[0].borrow().clone());
    }
    let (num_examples, num_classes) = validate_members(members)?;
    let cells = num_examples * num_classes;
    let mut sum = vec![0.0f64; cells];
    for member in members {
        for (acc, &y) in sum.iter_mut().zip(member.borrow().as_flat()) {
            *acc += y;
        }
    }
    let inv_n = 1.0 / members.len() as f64;
    for v in sum.iter_mut() {
        *v *= inv_n;
    }
    PredictionSet::from_flat(ensemble_id("ari", members), num_examples, num_classes, sum)
}

/// Aggregates with the rule's mean kind.
pub fn aggregate<S: Borrow<PredictionSet>>(
    members: &[S],
    rule: &AggregationRule,
) -> Result<PredictionSet> {
    rule.validate()?;
    match rule.kind {
        MeanKind::Geometric => geometric_mean(members, rule.epsilon),
        MeanKind::Arithmetic => arithmetic_mean(members),
    }
}

/// Top-1 accuracy of the aggregated ensemble.
pub fn ensemble_accuracy<S: Borrow<PredictionSet>>(
    members: &[S],
    labels: &[usize],
    rule: &AggregationRule,
) -> Result<f64> {
    aggregate(members, rule)?.top1_accuracy(labels)
}
