//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by validation, ingestion, and the analysis operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("prediction dump {path} is empty")]
    EmptyDump { path: PathBuf },

    #[error("prediction dump {path}, row {row}: expected {expected} columns, found {found}")]
    MalformedRowWidth {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("prediction dump {path}, row {row}: cannot parse `{value}` as {what}")]
    UnparsableField {
        path: PathBuf,
        row: usize,
        value: String,
        what: &'static str,
    },

    #[error("row {row}: negative probability {value}")]
    NegativeProbability { row: usize, value: f64 },

    #[error("row {row}: non-finite probability")]
    NonFiniteProbability { row: usize },

    #[error("row {row}: sum {sum} outside tolerance [1-1e-4, 1+1e-4]")]
    RowSumOutOfTolerance { row: usize, sum: f64 },

    #[error("prediction dump {path} mixes labeled (>= 0) and unlabeled (-1) rows")]
    MixedLabelPresence { path: PathBuf },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}, row {row}: example_id {found} out of order (expected {expected})")]
    NonSequentialExampleId {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: u64,
    },

    #[error("label {label} at example {example} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        example: usize,
        label: i64,
        num_classes: usize,
    },

    #[error("length mismatch: predictions have {predictions} examples, labels have {labels}")]
    LengthMismatch { predictions: usize, labels: usize },

    #[error("prediction set needs at least 1 example and 2 classes, got {num_examples}x{num_classes}")]
    DegenerateShape {
        num_examples: usize,
        num_classes: usize,
    },

    #[error("member {index} has shape {found_examples}x{found_classes}, expected {expected_examples}x{expected_classes}")]
    ShapeMismatch {
        index: usize,
        expected_examples: usize,
        expected_classes: usize,
        found_examples: usize,
        found_classes: usize,
    },

    #[error("member list is empty")]
    EmptyMemberList,

    #[error("epsilon {0} outside (0, 1e-6]")]
    InvalidEpsilon(f64),

    #[error("model profile `{model_id}`: {reason}")]
    InvalidProfile { model_id: String, reason: String },

    #[error("model registry {path}: {source}")]
    MalformedRegistry {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("point list is empty")]
    EmptyPointList,

    #[error("point list mixes cost units")]
    MixedCostUnits,

    #[error("curve for family `{family}`: {reason}")]
    InvalidCurve { family: String, reason: String },

    #[error("replicate count must be >= 1")]
    ReplicatesTooSmall,

    #[error("cohort spec invalid: {0}")]
    InvalidCohortSpec(String),

    #[error("calibration target {target} outside (1/C, 0.999) for C={num_classes}")]
    CalibrationTargetOutOfRange { target: f64, num_classes: usize },

    #[error("calibration did not converge after {iterations} iterations (best estimate {estimate})")]
    CalibrationNonConvergence { iterations: usize, estimate: f64 },

    #[error("simulation config invalid: {0}")]
    InvalidSimConfig(String),

    #[error("architecture invalid for the search space: {0}")]
    InvalidArch(String),

    #[error("ensemble size {0} outside 1..=3")]
    InvalidEnsembleSize(usize),

    #[error("reward params invalid: {0}")]
    InvalidRewardParams(String),

    #[error("surrogate params invalid: {0}")]
    InvalidSurrogateParams(String),

    #[error("latency must be positive, got {0}")]
    NonPositiveLatency(f64),

    #[error("search budget must be >= 1")]
    BudgetTooSmall,

    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from malformed or inconsistent input data
    /// (as opposed to invalid configuration values or internal bugs).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::EmptyDump { .. }
                | Error::MalformedRowWidth { .. }
                | Error::UnparsableField { .. }
                | Error::NegativeProbability { .. }
                | Error::NonFiniteProbability { .. }
                | Error::RowSumOutOfTolerance { .. }
                | Error::MixedLabelPresence { .. }
                | Error::MalformedHeader { .. }
                | Error::NonSequentialExampleId { .. }
                | Error::LabelOutOfRange { .. }
                | Error::LengthMismatch { .. }
                | Error::MalformedRegistry { .. }
        )
    }

    /// True for should-never-happen conditions.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::InvariantViolation(_))
    }
}
