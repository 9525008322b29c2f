//! Dataset container, CSV / LIBSVM ingestion, rescaling and splitting.
//!
//! # File formats
//!
//! **CSV**: the first line is a header, fields are comma-separated and use
//! `.` as the decimal point. Every non-label column must parse as a finite
//! `f64`; empty cells are rejected as missing values and `NaN`/`inf` are
//! rejected as malformed. The label column may hold any two distinct
//! values. `{-1, +1}` are taken as-is, `{0, 1}` map to `{-1, +1}`, and any
//! other pair maps the lexicographically smaller string to `-1` and the
//! larger to `+1`.
//!
//! **LIBSVM**: one example per line, `<label> <idx>:<value> ...`, indices
//! 1-based and strictly increasing within a line. Absent indices are zero.
//! Labels must be `-1`, `+1` (or `1`), or `0` which maps to `-1`. Blank
//! lines and lines starting with `#` are skipped.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("malformed cell at line {line}, column `{column}`: `{value}`")]
    MalformedCell {
        line: usize,
        column: String,
        value: String,
    },
    #[error("missing value at line {line}, column `{column}`")]
    MissingValue { line: usize, column: String },
    #[error("label column has more than two distinct values: {0:?}")]
    TooManyLabels(Vec<String>),
    #[error("invalid label `{value}` at line {line}")]
    InvalidLabel { line: usize, value: String },
    #[error("line {line}: feature indices are not strictly increasing")]
    NonMonotoneIndex { line: usize },
    #[error("line {line}: feature index {index} outside 1..={dimension}")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        dimension: usize,
    },
    #[error("line {line}: cannot parse `{token}`")]
    MalformedToken { line: usize, token: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("labels must be -1 or +1, found {0}")]
    NonBinaryLabel(f64),
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("split fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("split of {n} rows with fraction {fraction} leaves an empty partition")]
    EmptyPartition { n: usize, fraction: f64 },
    #[error("feature index {index} out of range for dimension {dimension}")]
    FeatureIndex { index: usize, dimension: usize },
}

/// Feature matrix (row-major, `n × d`) plus `±1` labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from a row-major buffer. Rejects non-finite values,
    /// labels outside `{-1, +1}` and empty shapes.
    pub fn new(
        n: usize,
        d: usize,
        features: Vec<f64>,
        labels: Vec<f64>,
    ) -> Result<Self, DataError> {
        if n == 0 {
            return Err(DataError::EmptyDataset);
        }
        if d == 0 {
            return Err(DataError::NoFeatures);
        }
        if features.len() != n * d {
            return Err(DataError::Shape(format!(
                "{} feature values for a {n}x{d} matrix",
                features.len()
            )));
        }
        if labels.len() != n {
            return Err(DataError::Shape(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(DataError::NonBinaryLabel(bad));
        }
        Ok(Self {
            n,
            d,
            features,
            labels,
            feature_names: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self, DataError> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(DataError::Shape(format!(
                "ragged rows ({} vs {d})",
                r.len()
            )));
        }
        Self::new(rows.len(), d, rows.concat(), labels)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self, DataError> {
        if names.len() != self.d {
            return Err(DataError::Shape(format!(
                "{} names for {} features",
                names.len(),
                self.d
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.d)
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.features[i * self.d + k]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Number of `(+1, -1)` labels.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y > 0.0).count();
        (pos, self.n - pos)
    }

    /// New dataset with the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            n: indices.len(),
            d: self.d,
            features,
            labels,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Replaces feature values without re-validating labels. Values must be finite.
    pub(crate) fn with_features(&self, features: Vec<f64>) -> Dataset {
        debug_assert_eq!(features.len(), self.features.len());
        Dataset {
            features,
            ..self.clone()
        }
    }

    /// Sample standard deviation (denominator `n - 1`) of feature `k`.
    pub fn feature_std(&self, k: usize) -> Result<f64, DataError> {
        if k >= self.d {
            return Err(DataError::FeatureIndex {
                index: k,
                dimension: self.d,
            });
        }
        if self.n < 2 {
            return Err(DataError::TooFewRows {
                needed: 2,
                found: self.n,
            });
        }
        Ok(sample_std(&self.column(k)))
    }

    /// Per-feature summary `(min, max, mean, sample std)`.
    pub fn summary(&self) -> Vec<FeatureSummary> {
        (0..self.d)
            .map(|k| {
                let col = self.column(k);
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                FeatureSummary {
                    min,
                    max,
                    mean: mean(&col),
                    std: if col.len() > 1 { sample_std(&col) } else { 0.0 },
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator; 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Maps raw label strings to `±1` following the documented rule.
fn map_labels(raw: &[String]) -> Result<Vec<f64>, DataError> {
    let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    if distinct.len() > 2 {
        return Err(DataError::TooManyLabels(
            distinct.into_iter().map(str::to_owned).collect(),
        ));
    }
    let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        if values.iter().all(|&v| v == 1.0 || v == -1.0) {
            return Ok(raw.iter().map(|s| s.parse::<f64>().unwrap()).collect());
        }
        if values.iter().all(|&v| v == 0.0 || v == 1.0) {
            return Ok(raw
                .iter()
                .map(|s| {
                    if s.parse::<f64>().unwrap() == 1.0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect());
        }
    }
    let larger = *distinct.iter().next_back().expect("at least one label");
    Ok(raw
        .iter()
        .map(|s| if s == larger { 1.0 } else { -1.0 })
        .collect())
}

/// Loads a headed CSV file; `label_column` names the target column.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, label_column)
}

pub fn read_csv<R: std::io::Read>(reader: R, label_column: &str) -> Result<Dataset, DataError> {
    read_csv_ignoring(reader, label_column, &[])
}

/// Like [`read_csv`], dropping the named columns (for example a text
/// stratum column) before parsing.
pub fn read_csv_ignoring<R: std::io::Read>(
    reader: R,
    label_column: &str,
    ignore: &[String],
) -> Result<Dataset, DataError> {
    let table = parse_csv(reader, Some(label_column), ignore)?;
    let raw_labels = table.raw_labels.unwrap_or_default();
    if raw_labels.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let labels = map_labels(&raw_labels)?;
    Dataset::new(labels.len(), table.names.len(), table.features, labels)?
        .with_feature_names(table.names)
}

/// Unlabelled numeric rows of a headed CSV, for prediction. Returns the
/// feature names and the rows.
pub fn read_csv_features<R: std::io::Read>(
    reader: R,
    ignore: &[String],
) -> Result<(Vec<String>, Vec<Vec<f64>>), DataError> {
    let table = parse_csv(reader, None, ignore)?;
    let d = table.names.len();
    if table.features.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok((
        table.names,
        table.features.chunks(d).map(<[f64]>::to_vec).collect(),
    ))
}

struct CsvTable {
    names: Vec<String>,
    features: Vec<f64>,
    raw_labels: Option<Vec<String>>,
}

fn parse_csv<R: std::io::Read>(
    reader: R,
    label_column: Option<&str>,
    ignore: &[String],
) -> Result<CsvTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::MissingLabelColumn(name.to_owned()))?,
        ),
        None => None,
    };
    let skipped: Vec<bool> = headers.iter().map(|h| ignore.contains(h)).collect();
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != label_idx && !skipped[j])
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(DataError::NoFeatures);
    }

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = r + 2;
        if record.len() != headers.len() {
            return Err(DataError::Shape(format!(
                "line {line} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if skipped[j] && Some(j) != label_idx {
                continue;
            }
            if cell.is_empty() {
                return Err(DataError::MissingValue {
                    line,
                    column: headers[j].clone(),
                });
            }
            if Some(j) == label_idx {
                raw_labels.push(cell.to_owned());
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => features.push(v),
                _ => {
                    return Err(DataError::MalformedCell {
                        line,
                        column: headers[j].clone(),
                        value: cell.to_owned(),
                    })
                }
            }
        }
    }
    Ok(CsvTable {
        names,
        features,
        raw_labels: label_idx.map(|_| raw_labels),
    })
}

/// Writes a dataset as headed CSV with the label in the last column.
pub fn write_csv<W: Write>(ds: &Dataset, label_column: &str, mut out: W) -> Result<(), DataError> {
    let names: Vec<String> = match ds.feature_names() {
        Some(n) => n.to_vec(),
        None => (1..=ds.dim()).map(|k| format!("x{k}")).collect(),
    };
    let mut line = names.join(",");
    line.push(',');
    line.push_str(label_column);
    writeln!(out, "{line}")?;
    for (i, row) in ds.rows().enumerate() {
        line.clear();
        for v in row {
            write!(line, "{v},").unwrap();
        }
        write!(line, "{}", ds.label(i) as i64).unwrap();
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn parse_libsvm_label(token: &str, line: usize) -> Result<f64, DataError> {
    match token.parse::<f64>() {
        Ok(v) if v == 1.0 => Ok(1.0),
        Ok(v) if v == -1.0 || v == 0.0 => Ok(-1.0),
        _ => Err(DataError::InvalidLabel {
            line,
            value: token.to_owned(),
        }),
    }
}

/// Loads a sparse LIBSVM file into a dense dataset. When `dimension` is
/// `None` it is inferred as the largest index present.
pub fn load_libsvm(path: impl AsRef<Path>, dimension: Option<usize>) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path.as_ref())?;
    read_libsvm(BufReader::new(file), dimension)
}

pub fn read_libsvm<R: BufRead>(reader: R, dimension: Option<usize>) -> Result<Dataset, DataError> {
    let mut sparse_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0;
    for (r, text) in reader.lines().enumerate() {
        let text = text?;
        let line = r + 1;
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let label = parse_libsvm_label(tokens.next().unwrap(), line)?;
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let malformed = || DataError::MalformedToken {
                line,
                token: tok.to_owned(),
            };
            let (idx, val) = tok.split_once(':').ok_or_else(malformed)?;
            let idx: usize = idx.parse().map_err(|_| malformed())?;
            let val: f64 = val.parse().map_err(|_| malformed())?;
            if !val.is_finite() {
                return Err(malformed());
            }
            if idx == 0 {
                return Err(DataError::IndexOutOfRange {
                    line,
                    index: 0,
                    dimension: dimension.unwrap_or(max_index),
                });
            }
            if idx <= last {
                return Err(DataError::NonMonotoneIndex { line });
            }
            if let Some(dim) = dimension {
                if idx > dim {
                    return Err(DataError::IndexOutOfRange {
                        line,
                        index: idx,
                        dimension: dim,
                    });
                }
            }
            last = idx;
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        sparse_rows.push(entries);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let d = dimension.unwrap_or(max_index);
    let mut features = vec![0.0; labels.len() * d];
    for (i, entries) in sparse_rows.iter().enumerate() {
        for &(k, v) in entries {
            features[i * d + k] = v;
        }
    }
    Dataset::new(labels.len(), d, features, labels)
}

/// Writes a dataset in LIBSVM format, omitting zero entries. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> Result<(), DataError> {
    let mut line = String::new();
    for (i, row) in ds.rows().enumerate() {
        line.clear();
        line.push_str(if ds.label(i) > 0.0 { "+1" } else { "-1" });
        for (k, &v) in row.iter().enumerate() {
            if v != 0.0 {
                write!(line, " {}:{v}", k + 1).unwrap();
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Per-feature affine map fitted on training data: `min -> -1`, `max -> +1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl RescaleParams {
    pub fn fit(ds: &Dataset) -> Self {
        let summary = ds.summary();
        Self {
            mins: summary.iter().map(|s| s.min).collect(),
            maxs: summary.iter().map(|s| s.max).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    /// Constant training features map to 0; values outside the training
    /// range extrapolate linearly.
    pub fn apply_value(&self, k: usize, v: f64) -> f64 {
        let (lo, hi) = (self.mins[k], self.maxs[k]);
        if hi > lo {
            2.0 * (v - lo) / (hi - lo) - 1.0
        } else {
            0.0
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(k, &v)| self.apply_value(k, v))
            .collect()
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset, DataError> {
        if ds.dim() != self.dim() {
            return Err(DataError::Shape(format!(
                "rescale fitted on {} features, dataset has {}",
                self.dim(),
                ds.dim()
            )));
        }
        let features = ds.rows().flat_map(|r| self.apply_row(r)).collect();
        Ok(ds.with_features(features))
    }
}

pub fn rescale_to_unit_range(ds: &Dataset) -> (Dataset, RescaleParams) {
    let params = RescaleParams::fit(ds);
    let scaled = params.apply(ds).expect("params fitted on the same dataset");
    (scaled, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Seeded shuffle, then the first `ceil(f * n)` rows form the training set.
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset), DataError> {
    let n = ds.len();
    if n < 2 {
        return Err(DataError::TooFewRows {
            needed: 2,
            found: n,
        });
    }
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(DataError::BadFraction(f));
    }
    let n_train = (f * n as f64).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DataError::EmptyPartition { n, fraction: f });
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(spec.seed).shuffle(&mut order);
    Ok((ds.subset(&order[..n_train]), ds.subset(&order[n_train..])))
}
