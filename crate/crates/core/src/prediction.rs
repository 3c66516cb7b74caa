//! Per-model prediction matrices and the CSV dump format.
//!
//! A prediction dump holds one softmax row per example:
//!
//! ```text
//! example_id,label,p_0,p_1,...,p_{C-1}
//! 0,3,0.01,0.02,...
//! ```
//!
//! `label` is `-1` on every row when the dump carries no ground truth;
//! labels can also live in a separate two-column `example_id,label` file.
//! Rows are renormalized on load when their sum strays from 1 by more than
//! floating-point noise, and rejected outright past a 1e-4 tolerance.

use std::path::Path;

use crate::error::{Error, Result};

/// Row sums further than this from 1.0 are rejected as malformed.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Row sums within this of 1.0 are kept bit-for-bit (no renormalization),
/// which makes save/load round trips idempotent.
const RENORM_SKIP_TOLERANCE: f64 = 1e-9;

/// A dense `num_examples x num_classes` matrix of class probabilities for a
/// single model.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model_id: String,
    pub num_examples: usize,
    pub num_classes: usize,
    /// Row-major probabilities; row `i` is `probs[i*num_classes..(i+1)*num_classes]`.
    probs: Vec<f64>,
}

impl PredictionSet {
    /// Builds a set from a flat row-major buffer, applying the same
    /// validation and renormalization policy as the CSV loader.
    pub fn from_flat(
        model_id: impl Into<String>,
        num_examples: usize,
        num_classes: usize,
        mut probs: Vec<f64>,
    ) -> Result<Self> {
        if num_examples == 0 || num_classes < 2 {
            return Err(Error::DegenerateShape {
                num_examples,
                num_classes,
            });
        }
        if probs.len() != num_examples * num_classes {
            return Err(Error::InvariantViolation(format!(
                "flat buffer has {} entries for shape {}x{}",
                probs.len(),
                num_examples,
                num_classes
            )));
        }
        for (row_idx, row) in probs.chunks_exact_mut(num_classes).enumerate() {
            validate_and_normalize_row(row_idx, row)?;
        }
        Ok(PredictionSet {
            model_id: model_id.into(),
            num_examples,
            num_classes,
            probs,
        })
    }

    pub fn row(&self, example: usize) -> &[f64] {
        &self.probs[example * self.num_classes..(example + 1) * self.num_classes]
    }

    pub fn prob(&self, example: usize, class: usize) -> f64 {
        self.probs[example * self.num_classes + class]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    /// Index of the highest-probability class per example. Ties go to the
    /// lowest class index.
    pub fn top1_predictions(&self) -> Vec<usize> {
        (0..self.num_examples)
            .map(|i| argmax(self.row(i)))
            .collect()
    }

    /// Fraction of examples whose top-1 prediction matches the label.
    pub fn top1_accuracy(&self, labels: &[usize]) -> Result<f64> {
        if labels.len() != self.num_examples {
            return Err(Error::LengthMismatch {
                predictions: self.num_examples,
                labels: labels.len(),
            });
        }
        for (example, &label) in labels.iter().enumerate() {
            if label >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    example,
                    label: label as i64,
                    num_classes: self.num_classes,
                });
            }
        }
        let correct = (0..self.num_examples)
            .filter(|&i| argmax(self.row(i)) == labels[i])
            .count();
        Ok(correct as f64 / self.num_examples as f64)
    }

    /// `1.0 - top1_accuracy`. Computed so that `accuracy + error_rate == 1.0`
    /// holds exactly in f64.
    pub fn error_rate(&self, labels: &[usize]) -> Result<f64> {
        Ok(1.0 - self.top1_accuracy(labels)?)
    }
}

/// First index of the maximum value. A strictly-greater scan, so ties break
/// to the lowest index regardless of iteration quirks.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = idx;
        }
    }
    best
}

fn validate_and_normalize_row(row_idx: usize, row: &mut [f64]) -> Result<()> {
    let mut sum = 0.0;
    for &v in row.iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteProbability { row: row_idx });
        }
        if v < 0.0 {
            return Err(Error::NegativeProbability {
                row: row_idx,
                value: v,
            });
        }
        sum += v;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::RowSumOutOfTolerance { row: row_idx, sum });
    }
    if (sum - 1.0).abs() > RENORM_SKIP_TOLERANCE {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(())
}

fn read_to_records(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("{other:?}"),
            },
        })?;
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .clone();
    let mut records = Vec::new();
    for item in reader.records() {
        let record = item.map_err(|e| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok((header, records))
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    row: usize,
    value: &str,
    what: &'static str,
) -> Result<T> {
    value.trim().parse().map_err(|_| Error::UnparsableField {
        path: path.to_path_buf(),
        row,
        value: value.to_string(),
        what,
    })
}

fn check_sequential(path: &Path, row: usize, id: u64) -> Result<()> {
    if id != row as u64 {
        return Err(Error::NonSequentialExampleId {
            path: path.to_path_buf(),
            row,
            expected: row,
            found: id,
        });
    }
    Ok(())
}

/// Loads a prediction dump, ignoring any label column. The model id is the
/// file stem.
pub fn load_prediction_dump(path: impl AsRef<Path>) -> Result<PredictionSet> {
    load_dump_with_labels(path).map(|(set, _)| set)
}

/// Loads a prediction dump along with its label column. Returns labels when
/// every row carries one (`label >= 0`), `None` when every row is `-1`, and
/// an error on a mix.
pub fn load_dump_with_labels(
    path: impl AsRef<Path>,
) -> Result<(PredictionSet, Option<Vec<usize>>)> {
    let path = path.as_ref();
    let (header, records) = read_to_records(path)?;
    if header.len() < 4
        || header.get(0) != Some("example_id")
        || header.get(1) != Some("label")
    {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!(
                "expected `example_id,label,p_0,...` with at least 2 classes, got {} columns",
                header.len()
            ),
        });
    }
    let num_classes = header.len() - 2;
    for (c, name) in header.iter().skip(2).enumerate() {
        if name != format!("p_{c}") {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("probability column {} is named `{name}`, expected `p_{c}`", c + 2),
            });
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDump {
            path: path.to_path_buf(),
        });
    }

    let mut probs = Vec::with_capacity(records.len() * num_classes);
    let mut raw_labels = Vec::with_capacity(records.len());
    for (row, record) in records.iter().enumerate() {
        if record.len() != num_classes + 2 {
            return Err(Error::MalformedRowWidth {
                path: path.to_path_buf(),
                row,
                expected: num_classes + 2,
                found: record.len(),
            });
        }
        let id: u64 = parse_field(path, row, &record[0], "example id")?;
        check_sequential(path, row, id)?;
        let label: i64 = parse_field(path, row, &record[1], "label")?;
        raw_labels.push(label);
        for field in record.iter().skip(2) {
            probs.push(parse_field::<f64>(path, row, field, "probability")?);
        }
    }

    let labeled = raw_labels.iter().filter(|&&l| l >= 0).count();
    let labels = if labeled == raw_labels.len() {
        let mut out = Vec::with_capacity(raw_labels.len());
        for (example, &label) in raw_labels.iter().enumerate() {
            if label as usize >= num_classes {
                return Err(Error::LabelOutOfRange {
                    example,
                    label,
                    num_classes,
                });
            }
            out.push(label as usize);
        }
        Some(out)
    } else if raw_labels.iter().all(|&l| l == -1) {
        None
    } else {
        return Err(Error::MixedLabelPresence {
            path: path.to_path_buf(),
        });
    };

    let model_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".to_string());
    let set = PredictionSet::from_flat(model_id, records.len(), num_classes, probs)?;
    Ok((set, labels))
}

/// Loads a standalone two-column `example_id,label` file.
pub fn load_label_file(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let (header, records) = read_to_records(path)?;
    if header.len() != 2 || header.get(0) != Some("example_id") || header.get(1) != Some("label") {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "expected exactly `example_id,label`".to_string(),
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDump {
            path: path.to_path_buf(),
        });
    }
    let mut labels = Vec::with_capacity(records.len());
    for (row, record) in records.iter().enumerate() {
        if record.len() != 2 {
            return Err(Error::MalformedRowWidth {
                path: path.to_path_buf(),
                row,
                expected: 2,
                found: record.len(),
            });
        }
        let id: u64 = parse_field(path, row, &record[0], "example id")?;
        check_sequential(path, row, id)?;
        let label: i64 = parse_field(path, row, &record[1], "label")?;
        if label < 0 {
            return Err(Error::LabelOutOfRange {
                example: row,
                label,
                num_classes: usize::MAX,
            });
        }
        labels.push(label as usize);
    }
    Ok(labels)
}

/// Writes a prediction dump. Probabilities use the shortest decimal form
/// that parses back to the same f64, so save/load is lossless.
pub fn save_prediction_dump(
    set: &PredictionSet,
    labels: Option<&[usize]>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(labels) = labels {
        if labels.len() != set.num_examples {
            return Err(Error::LengthMismatch {
                predictions: set.num_examples,
                labels: labels.len(),
            });
        }
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvariantViolation(format!("csv writer: {other:?}")),
    })?;
    let mut header = vec!["example_id".to_string(), "label".to_string()];
    header.extend((0..set.num_classes).map(|c| format!("p_{c}")));
    write_record(&mut writer, path, &header)?;
    for i in 0..set.num_examples {
        let mut record = Vec::with_capacity(set.num_classes + 2);
        record.push(i.to_string());
        record.push(match labels {
            Some(labels) => labels[i].to_string(),
            None => "-1".to_string(),
        });
        record.extend(set.row(i).iter().map(|v| format!("{v}")));
        write_record(&mut writer, path, &record)?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes a standalone `example_id,label` file.
pub fn save_label_file(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvariantViolation(format!("csv writer: {other:?}")),
    })?;
    write_record(&mut writer, path, &["example_id".to_string(), "label".to_string()])?;
    for (i, label) in labels.iter().enumerate() {
        write_record(&mut writer, path, &[i.to_string(), label.to_string()])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_record<W: std::io::Write, S: AsRef<[u8]>>(
    writer: &mut csv::Writer<W>,
    path: &Path,
    record: &[S],
) -> Result<()> {
    writer.write_record(record).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvariantViolation(format!("csv write: {other:?}")),
    })
}
