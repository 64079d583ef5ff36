//! Schema-free featurization of alert bodies.
//!
//! Arbitrary nested documents are flattened to dotted-path columns, profiled,
//! and compiled into a [`FeatureSpec`]: numeric columns are parsed and
//! standardized with train statistics, string columns are one-hot encoded
//! over a frequency-thresholded vocabulary with reserved `missing_val` and
//! `rare_val` categories, and columns that cannot generalize (identifier-like
//! names, degenerate vocabularies) are dropped. Transforming with a fitted
//! spec is total: unknown paths are ignored and unseen values fold into the
//! reserved categories, so the output width never changes after fit.

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::DenseMatrix;
use crate::num::Scalar;

/// Reserved category for absent or null values in string columns.
pub const MISSING_VAL: &str = "missing_val";
/// Reserved category for below-threshold and unseen string values.
pub const RARE_VAL: &str = "rare_val";
/// Sentinel replacing missing values in numeric columns.
pub const NUMERIC_MISSING_SENTINEL: f64 = -1.0;
/// Default minimum train frequency for a string value to enter a vocabulary.
pub const DEFAULT_RARE_THRESHOLD: usize = 50;
/// Default nesting depth limit for flattening (cycle guard).
pub const DEFAULT_MAX_DEPTH: usize = 64;

const FEATURE_SPEC_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("document nesting exceeds depth limit {0}")]
    DepthExceeded(usize),
    #[error("cannot fit a feature spec on zero records")]
    NoRecords,
    #[error("rare threshold must be at least 1")]
    InvalidThreshold,
    #[error("unsupported feature spec version {0} (expected {FEATURE_SPEC_VERSION})")]
    VersionMismatch(u32),
    #[error("corrupt feature spec: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Scalar value at a flattened path.
#[derive(Debug, Clone, PartialEq)]
pub enum FlatValue {
    /// Absent or JSON null.
    Missing,
    Number(f64),
    Text(String),
}

impl FlatValue {
    /// Numeric reading of the value, if any. Strings that parse as numbers
    /// count, so a column of `"42"`-style strings is numeric.
    pub fn parse_number(&self) -> Option<f64> {
        match self {
            FlatValue::Number(v) => Some(*v),
            FlatValue::Text(s) => s.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
            FlatValue::Missing => None,
        }
    }

    /// Canonical string reading of the value, for categorical handling.
    pub fn as_text(&self) -> Option<Cow<'_, str>> {
        match self {
            FlatValue::Number(v) => Some(Cow::Owned(format!("{v}"))),
            FlatValue::Text(s) => Some(Cow::Borrowed(s)),
            FlatValue::Missing => None,
        }
    }
}

/// A flattened document: dotted paths mapped to scalar values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatRecord(pub BTreeMap<String, FlatValue>);

impl FlatRecord {
    pub fn get(&self, path: &str) -> Option<&FlatValue> {
        self.0.get(path)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Flatten a document with the default depth limit.
pub fn flatten_document(body: &serde_json::Value) -> Result<FlatRecord, FeaturizeError> {
    flatten_document_with_depth(body, DEFAULT_MAX_DEPTH)
}

/// Flatten a document: nested keys become dot-joined paths, arrays are
/// serialized to their canonical compact JSON string (object keys inside
/// arrays are sorted), booleans become the strings `true`/`false`, and nulls
/// become [`FlatValue::Missing`].
pub fn flatten_document_with_depth(
    body: &serde_json::Value,
    max_depth: usize,
) -> Result<FlatRecord, FeaturizeError> {
    let mut record = FlatRecord::default();
    let mut path = String::new();
    flatten_into(body, &mut path, 0, max_depth, &mut record)?;
    Ok(record)
}

fn flatten_into(
    value: &serde_json::Value,
    path: &mut String,
    depth: usize,
    max_depth: usize,
    out: &mut FlatRecord,
) -> Result<(), FeaturizeError> {
    if depth > max_depth {
        return Err(FeaturizeError::DepthExceeded(max_depth));
    }
    match value {
        serde_json::Value::Object(map) => {
            for (key, child) in map {
                let saved = path.len();
                if !path.is_empty() {
                    path.push('.');
                }
                path.push_str(key);
                flatten_into(child, path, depth + 1, max_depth, out)?;
                path.truncate(saved);
            }
            Ok(())
        }
        _ => {
            if path.is_empty() {
                // A bare scalar at the document root has no key to name it.
                return Ok(());
            }
            let flat = match value {
                serde_json::Value::Null => FlatValue::Missing,
                serde_json::Value::Bool(b) => FlatValue::Text(b.to_string()),
                serde_json::Value::Number(n) => match n.as_f64() {
                    Some(v) if v.is_finite() => FlatValue::Number(v),
                    _ => FlatValue::Text(n.to_string()),
                },
                serde_json::Value::String(s) => FlatValue::Text(s.clone()),
                // Arrays are one opaque string value. serde_json objects are
                // keyed by BTreeMap, so nested object keys serialize sorted
                // and equal arrays stringify identically.
                serde_json::Value::Array(_) => FlatValue::Text(value.to_string()),
                serde_json::Value::Object(_) => unreachable!(),
            };
            out.0.insert(path.clone(), flat);
            Ok(())
        }
    }
}

/// Per-path observation statistics over a record corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub path: String,
    /// Total rows profiled (same for every column).
    pub observed: usize,
    /// Rows where the path was absent or null.
    pub missing: usize,
    /// Non-missing values that parse as numbers.
    pub numeric_parse: usize,
    /// Frequencies of the canonical string form of non-missing values.
    pub string_freqs: BTreeMap<String, usize>,
}

/// Profile every path seen anywhere in the corpus, sorted by path.
pub fn profile_columns(records: &[FlatRecord]) -> Vec<ColumnProfile> {
    let mut profiles: BTreeMap<&str, ColumnProfile> = BTreeMap::new();
    for record in records {
        for (path, value) in &record.0 {
            let profile = profiles
                .entry(path.as_str())
                .or_insert_with(|| ColumnProfile {
                    path: path.clone(),
                    observed: records.len(),
                    missing: 0,
                    numeric_parse: 0,
                    string_freqs: BTreeMap::new(),
                });
            match value {
                FlatValue::Missing => profile.missing += 1,
                other => {
                    if other.parse_number().is_some() {
                        profile.numeric_parse += 1;
                    }
                    let text = other.as_text().expect("non-missing value has text form");
                    *profile.string_freqs.entry(text.into_owned()).or_insert(0) += 1;
                }
            }
        }
    }
    let total = records.len();
    let mut out: Vec<ColumnProfile> = profiles.into_values().collect();
    for p in &mut out {
        // Paths absent from a record count as missing for that record.
        let present: usize = p.string_freqs.values().sum::<usize>() + p.missing;
        p.missing += total - present.min(total);
    }
    out
}

/// Why a column was excluded from the encoded output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Path contains an identifier-like token (id, time, epoch, ...).
    IdentifierName,
    /// After folding, the column carries no usable categories.
    DegenerateVocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericColumn {
    pub path: String,
    /// Train mean of the sentinel-imputed column.
    pub mean: f64,
    /// Train population standard deviation; 0 means pass-through.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalColumn {
    pub path: String,
    /// Retained values, lexicographically sorted, disjoint from the reserved
    /// categories.
    pub vocab: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub path: String,
    pub reason: DropReason,
}

/// Fitted featurization schema. Immutable after fit; the output width is
/// `numeric.len() + sum(vocab.len() + 2)` forever after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub version: u32,
    pub rare_threshold: usize,
    pub numeric: Vec<NumericColumn>,
    pub categorical: Vec<CategoricalColumn>,
    pub dropped: Vec<DroppedColumn>,
}

impl FeatureSpec {
    pub fn width(&self) -> usize {
        self.numeric.len()
            + self
                .categorical
                .iter()
                .map(|c| c.vocab.len() + 2)
                .sum::<usize>()
    }

    /// Human-readable name per output slot, in vector order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for n in &self.numeric {
            names.push(n.path.clone());
        }
        for c in &self.categorical {
            for v in &c.vocab {
                names.push(format!("{}={}", c.path, v));
            }
            names.push(format!("{}={}", c.path, MISSING_VAL));
            names.push(format!("{}={}", c.path, RARE_VAL));
        }
        names
    }

    /// Serialize to the versioned on-disk document. Field order is fixed, so
    /// equal specs produce byte-identical output.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("feature spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FeaturizeError> {
        let spec: FeatureSpec =
            serde_json::from_str(text).map_err(|e| FeaturizeError::Corrupt(e.to_string()))?;
        if spec.version != FEATURE_SPEC_VERSION {
            return Err(FeaturizeError::VersionMismatch(spec.version));
        }
        Ok(spec)
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<(), FeaturizeError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self, FeaturizeError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Tokens that mark a column name as identifier-like. Matching is by whole
/// token after splitting on separators and camelCase boundaries, so
/// `session_id` drops while `incident_count` survives.
const IDENTIFIER_TOKENS: [&str; 7] = ["id", "time", "epoch", "date", "guid", "uuid", "timestamp"];

fn has_identifier_token(path: &str) -> bool {
    let mut token = String::new();
    let mut prev_lower = false;
    let check = |tok: &mut String| {
        let hit = !tok.is_empty() && IDENTIFIER_TOKENS.contains(&tok.as_str());
        tok.clear();
        hit
    };
    for ch in path.chars() {
        if ch.is_alphanumeric() {
            if ch.is_uppercase() && prev_lower && check(&mut token) {
                return true;
            }
            prev_lower = ch.is_lowercase();
            token.extend(ch.to_lowercase());
        } else {
            prev_lower = false;
            if check(&mut token) {
                return true;
            }
        }
    }
    check(&mut token)
}

/// Fit a [`FeatureSpec`] on flattened train records.
///
/// Columns are typed numeric iff every non-missing value parses as a number;
/// otherwise they are categorical with values below `rare_threshold`
/// occurrences folded into [`RARE_VAL`]. Identifier-named columns and columns
/// whose folded values are degenerate (no retained vocabulary, or a single
/// constant category) are dropped with a recorded reason.
pub fn fit_feature_spec(
    records: &[FlatRecord],
    rare_threshold: usize,
) -> Result<FeatureSpec, FeaturizeError> {
    if records.is_empty() {
        return Err(FeaturizeError::NoRecords);
    }
    if rare_threshold == 0 {
        return Err(FeaturizeError::InvalidThreshold);
    }
    let profiles = profile_columns(records);
    let mut numeric = Vec::new();
    let mut categorical = Vec::new();
    let mut dropped = Vec::new();
    for profile in &profiles {
        if has_identifier_token(&profile.path) {
            dropped.push(DroppedColumn {
                path: profile.path.clone(),
                reason: DropReason::IdentifierName,
            });
            continue;
        }
        let present = profile.observed - profile.missing;
        if profile.numeric_parse == present {
            // Numeric (vacuously so when fully missing): impute the sentinel,
            // then standardize with train statistics.
            let values: Vec<f64> = records
                .iter()
                .map(|r| numeric_value(r.get(&profile.path)))
                .collect();
            let (mean, std) = crate::util::mean_std(&values);
            numeric.push(NumericColumn {
                path: profile.path.clone(),
                mean,
                std,
            });
        } else {
            let vocab: Vec<String> = profile
                .string_freqs
                .iter()
                .filter(|(value, &count)| {
                    count >= rare_threshold
                        && value.as_str() != MISSING_VAL
                        && value.as_str() != RARE_VAL
                })
                .map(|(value, _)| value.clone())
                .collect();
            let rare_present = profile.string_freqs.iter().any(|(value, &count)| {
                count < rare_threshold || value == MISSING_VAL || value == RARE_VAL
            });
            let folded_categories =
                vocab.len() + usize::from(profile.missing > 0) + usize::from(rare_present);
            if vocab.is_empty() || folded_categories <= 1 {
                dropped.push(DroppedColumn {
                    path: profile.path.clone(),
                    reason: DropReason::DegenerateVocabulary,
                });
            } else {
                categorical.push(CategoricalColumn {
                    path: profile.path.clone(),
                    vocab,
                });
            }
        }
    }
    Ok(FeatureSpec {
        version: FEATURE_SPEC_VERSION,
        rare_threshold,
        numeric,
        categorical,
        dropped,
    })
}

fn numeric_value(value: Option<&FlatValue>) -> f64 {
    value
        .and_then(FlatValue::parse_number)
        .unwrap_or(NUMERIC_MISSING_SENTINEL)
}

/// Dense numeric encoding of one alert body.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct FeatureVector<S> {
    pub alert_id: String,
    pub values: Vec<S>,
}

/// Encode one record against a fitted spec. Total on any input: unknown
/// paths are ignored, missing numerics become the standardized sentinel, and
/// unseen strings fold into [`RARE_VAL`].
pub fn transform_record<S: Scalar>(record: &FlatRecord, spec: &FeatureSpec) -> Vec<S> {
    let mut out = Vec::with_capacity(spec.width());
    for col in &spec.numeric {
        let raw = numeric_value(record.get(&col.path));
        let value = if col.std > 0.0 {
            (raw - col.mean) / col.std
        } else {
            raw
        };
        out.push(S::of(value));
    }
    for col in &spec.categorical {
        let block_start = out.len();
        out.resize(block_start + col.vocab.len() + 2, S::zero());
        let slot = match record.get(&col.path).and_then(FlatValue::as_text) {
            None => col.vocab.len(), // missing_val
            Some(text) => match col
                .vocab
                .binary_search_by(|v| v.as_str().cmp(text.as_ref()))
            {
                Ok(idx) => idx,
                Err(_) => col.vocab.len() + 1, // rare_val
            },
        };
        out[block_start + slot] = S::one();
    }
    out
}

/// Row-wise [`transform_record`] with order preserved.
pub fn transform_batch<S: Scalar>(records: &[FlatRecord], spec: &FeatureSpec) -> DenseMatrix<S> {
    let mut matrix = DenseMatrix::with_width(spec.width());
    for record in records {
        matrix.push_row(&transform_record(record, spec));
    }
    matrix
}

/// Train-fitted standardization for feature matrices that are produced
/// outside the spec pipeline (context features feeding scale-sensitive
/// learners). Columns with zero train deviation pass through.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<S: Scalar>(matrix: &DenseMatrix<S>) -> Self {
        let cols = matrix.cols();
        let mut mean = vec![0.0; cols];
        let mut std = vec![0.0; cols];
        if matrix.rows() > 0 {
            let n = matrix.rows() as f64;
            for row in matrix.iter_rows() {
                for (j, v) in row.iter().enumerate() {
                    mean[j] += v.as_f64();
                }
            }
            for m in &mut mean {
                *m /= n;
            }
            for row in matrix.iter_rows() {
                for (j, v) in row.iter().enumerate() {
                    let d = v.as_f64() - mean[j];
                    std[j] += d * d;
                }
            }
            for s in &mut std {
                *s = (*s / n).sqrt();
            }
        }
        Self { mean, std }
    }

    pub fn apply<S: Scalar>(&self, matrix: &DenseMatrix<S>) -> DenseMatrix<S> {
        let mut out = DenseMatrix::with_width(matrix.cols());
        let mut row_buf = vec![S::zero(); matrix.cols()];
        for row in matrix.iter_rows() {
            for (j, v) in row.iter().enumerate() {
                row_buf[j] = if self.std[j] > 0.0 {
                    S::of((v.as_f64() - self.mean[j]) / self.std[j])
                } else {
                    *v
                };
            }
            out.push_row(&row_buf);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn flat(body: serde_json::Value) -> FlatRecord {
        flatten_document(&body).unwrap()
    }

    #[test]
    fn flattens_single_nesting() {
        let r = flat(json!({"a": {"b": 1}}));
        assert_eq!(r.get("a.b"), Some(&FlatValue::Number(1.0)));
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn arrays_become_canonical_strings() {
        let r = flat(json!({"tags": ["x", "y"]}));
        assert_eq!(
            r.get("tags"),
            Some(&FlatValue::Text("[\"x\",\"y\"]".into()))
        );
        // Object keys inside arrays serialize sorted, so equal arrays
        // stringify identically regardless of construction order.
        let a = flat(json!({"v": [{"b": 1, "a": 2}]}));
        assert_eq!(
            a.get("v"),
            Some(&FlatValue::Text("[{\"a\":2,\"b\":1}]".into()))
        );
    }

    #[test]
    fn empty_document_flattens_to_empty() {
        assert!(flat(json!({})).is_empty());
    }

    #[test]
    fn null_is_missing_and_bool_is_text() {
        let r = flat(json!({"a": null, "b": true}));
        assert_eq!(r.get("a"), Some(&FlatValue::Missing));
        assert_eq!(r.get("b"), Some(&FlatValue::Text("true".into())));
    }

    #[test]
    fn depth_limit_guards_deep_nesting() {
        let mut v = json!(1);
        for _ in 0..70 {
            v = json!({ "n": v });
        }
        assert!(matches!(
            flatten_document_with_depth(&v, 64),
            Err(FeaturizeError::DepthExceeded(64))
        ));
        assert!(flatten_document_with_depth(&v, 80).is_ok());
    }

    #[test]
    fn identifier_tokens_match_whole_tokens() {
        assert!(has_identifier_token("session_id"));
        assert!(has_identifier_token("eventTime"));
        assert!(has_identifier_token("meta.uuid"));
        assert!(has_identifier_token("epoch"));
        assert!(!has_identifier_token("incident_count"));
        assert!(!has_identifier_token("identity_provider"));
        assert!(!has_identifier_token("timeout"));
    }

    #[test]
    fn fit_builds_vocabulary_and_folds_rare() {
        // proc.name: {"cmd","cmd","ps"} at threshold 2 -> vocab {"cmd"},
        // "ps" folds into rare_val.
        let records = vec![
            flat(json!({"proc": {"name": "cmd"}, "score": 1})),
            flat(json!({"proc": {"name": "cmd"}, "score": 2})),
            flat(json!({"proc": {"name": "ps"}, "score": 3})),
        ];
        let spec = fit_feature_spec(&records, 2).unwrap();
        let col = spec
            .categorical
            .iter()
            .find(|c| c.path == "proc.name")
            .expect("proc.name retained");
        assert_eq!(col.vocab, vec!["cmd".to_string()]);
        assert_eq!(spec.numeric.len(), 1);
        assert_eq!(spec.numeric[0].path, "score");
        assert_eq!(spec.width(), 1 + (1 + 2));
    }

    #[test]
    fn identifier_columns_are_dropped_with_reason() {
        let records = vec![
            flat(json!({"session_id": "x1", "proc": {"name": "cmd"}})),
            flat(json!({"session_id": "x2", "proc": {"name": "ps"}})),
        ];
        let spec = fit_feature_spec(&records, 1).unwrap();
        let drop = spec
            .dropped
            .iter()
            .find(|d| d.path == "session_id")
            .unwrap();
        assert_eq!(drop.reason, DropReason::IdentifierName);
        assert!(spec.categorical.iter().all(|c| c.path != "session_id"));
    }

    #[test]
    fn degenerate_columns_are_dropped() {
        // Column folds to {missing_val, rare_val} only: no vocabulary left.
        let records = vec![
            flat(json!({"noise": "a", "keep": "k"})),
            flat(json!({"noise": "b", "keep": "k"})),
            flat(json!({"keep": "k", "other": "x"})),
        ];
        let spec = fit_feature_spec(&records, 2).unwrap();
        let drop = spec.dropped.iter().find(|d| d.path == "noise").unwrap();
        assert_eq!(drop.reason, DropReason::DegenerateVocabulary);
        // A constant column is just as useless.
        let drop = spec.dropped.iter().find(|d| d.path == "keep").unwrap();
        assert_eq!(drop.reason, DropReason::DegenerateVocabulary);
    }

    #[test]
    fn mixed_type_column_is_categorical() {
        let records = vec![
            flat(json!({"v": 1})),
            flat(json!({"v": "x"})),
            flat(json!({"v": 2})),
        ];
        let spec = fit_feature_spec(&records, 1).unwrap();
        assert!(spec.numeric.is_empty());
        let col = &spec.categorical[0];
        // Numbers fold via their canonical text form.
        assert_eq!(
            col.vocab,
            vec!["1".to_string(), "2".to_string(), "x".to_string()]
        );
    }

    #[test]
    fn zero_records_is_an_error() {
        assert!(matches!(
            fit_feature_spec(&[], 50),
            Err(FeaturizeError::NoRecords)
        ));
    }

    fn two_column_spec() -> (Vec<FlatRecord>, FeatureSpec) {
        let records = vec![
            flat(json!({"num": 1.0, "cat": "a"})),
            flat(json!({"num": 3.0, "cat": "a"})),
            flat(json!({"num": 5.0, "cat": "b"})),
        ];
        let spec = fit_feature_spec(&records, 1).unwrap();
        (records, spec)
    }

    #[test]
    fn transform_matches_hand_encoding() {
        let (records, spec) = two_column_spec();
        // num: mean 3, std sqrt(8/3); cat vocab ["a","b"] + missing + rare.
        assert_eq!(spec.width(), 1 + 4);
        let v: Vec<f64> = transform_record(&records[0], &spec);
        let std = (8.0f64 / 3.0).sqrt();
        assert!((v[0] - (1.0 - 3.0) / std).abs() < 1e-12);
        assert_eq!(&v[1..], &[1.0, 0.0, 0.0, 0.0]);
        let v: Vec<f64> = transform_record(&records[2], &spec);
        assert_eq!(&v[1..], &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn unknown_paths_are_ignored() {
        let (_, spec) = two_column_spec();
        let with_new = flat(json!({"num": 1.0, "cat": "a", "brand_new": 9}));
        let without = flat(json!({"num": 1.0, "cat": "a"}));
        let a: Vec<f64> = transform_record(&with_new, &spec);
        let b: Vec<f64> = transform_record(&without, &spec);
        assert_eq!(a, b);
    }

    #[test]
    fn fully_missing_record_encodes_sentinels() {
        let (_, spec) = two_column_spec();
        let empty = flat(json!({}));
        let v: Vec<f64> = transform_record(&empty, &spec);
        let std = (8.0f64 / 3.0).sqrt();
        assert!((v[0] - (NUMERIC_MISSING_SENTINEL - 3.0) / std).abs() < 1e-12);
        // One-hot on the missing_val slot.
        assert_eq!(&v[1..], &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn unseen_string_folds_to_rare() {
        let (_, spec) = two_column_spec();
        let novel = flat(json!({"num": 1.0, "cat": "never_seen"}));
        let v: Vec<f64> = transform_record(&novel, &spec);
        assert_eq!(&v[1..], &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn batch_preserves_order_and_width() {
        let (records, spec) = two_column_spec();
        let m = transform_batch::<f64>(&records, &spec);
        assert_eq!(m.rows(), 3);
        assert_eq!(m.cols(), spec.width());
        let empty = transform_batch::<f64>(&[], &spec);
        assert_eq!(empty.rows(), 0);
        assert_eq!(empty.cols(), spec.width());
        // Permuted input gives row-permuted output.
        let permuted = vec![records[2].clone(), records[0].clone(), records[1].clone()];
        let p = transform_batch::<f64>(&permuted, &spec);
        assert_eq!(p.row(0), m.row(2));
        assert_eq!(p.row(1), m.row(0));
        assert_eq!(p.row(2), m.row(1));
    }

    #[test]
    fn fit_is_deterministic_and_serde_is_byte_stable() {
        let (records, spec) = two_column_spec();
        let again = fit_feature_spec(&records, 1).unwrap();
        assert_eq!(spec.to_json(), again.to_json());
        let back = FeatureSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back.to_json(), spec.to_json());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let (_, spec) = two_column_spec();
        let mut doc: serde_json::Value = serde_json::from_str(&spec.to_json()).unwrap();
        doc["version"] = json!(99);
        assert!(matches!(
            FeatureSpec::from_json(&doc.to_string()),
            Err(FeaturizeError::VersionMismatch(99))
        ));
    }

    #[test]
    fn raising_threshold_never_enlarges_vocabularies() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let records: Vec<FlatRecord> = (0..400)
            .map(|_| {
                flat(json!({
                    "cat": format!("v{}", rng.random_range(0..12)),
                    "other": format!("w{}", rng.random_range(0..4)),
                }))
            })
            .collect();
        let mut prev: Option<FeatureSpec> = None;
        for threshold in [1usize, 2, 10, 50] {
            let spec = fit_feature_spec(&records, threshold).unwrap();
            if let Some(p) = &prev {
                for col in &spec.categorical {
                    let before = p.categorical.iter().find(|c| c.path == col.path).unwrap();
                    assert!(col.vocab.len() <= before.vocab.len());
                    assert!(col.vocab.iter().all(|v| before.vocab.contains(v)));
                }
            }
            prev = Some(spec);
        }
    }

    #[test]
    fn transforming_fit_corpus_reproduces_category_frequencies() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let records: Vec<FlatRecord> = (0..300)
            .map(|_| {
                if rng.random_range(0..10) == 0 {
                    flat(json!({}))
                } else {
                    flat(json!({"cat": format!("v{}", rng.random_range(0..6))}))
                }
            })
            .collect();
        let spec = fit_feature_spec(&records, 20).unwrap();
        let col = spec.categorical.iter().find(|c| c.path == "cat").unwrap();
        let m = transform_batch::<f64>(&records, &spec);
        let block = spec.numeric.len();
        let mut counts = vec![0usize; col.vocab.len() + 2];
        for row in m.iter_rows() {
            let slot = row[block..block + counts.len()]
                .iter()
                .position(|&v| v == 1.0)
                .unwrap();
            counts[slot] += 1;
        }
        let profiles = profile_columns(&records);
        let profile = profiles.iter().find(|p| p.path == "cat").unwrap();
        for (i, v) in col.vocab.iter().enumerate() {
            assert_eq!(counts[i], profile.string_freqs[v]);
        }
        assert_eq!(counts[col.vocab.len()], profile.missing);
    }

    #[test]
    fn standardizer_round_trip() {
        let m = DenseMatrix::from_rows(vec![vec![1.0f64, 5.0], vec![3.0, 5.0]]);
        let s = Standardizer::fit(&m);
        let out = s.apply(&m);
        assert!((out.at(0, 0) + 1.0).abs() < 1e-12);
        assert!((out.at(1, 0) - 1.0).abs() < 1e-12);
        // Zero-deviation column passes through.
        assert_eq!(out.at(0, 1), 5.0);
    }
}
