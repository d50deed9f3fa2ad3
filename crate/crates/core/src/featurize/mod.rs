//! The feature store: a fitted, versioned [`FeatureSchema`] and the fixed-width
//! [`FeatureVector`]s it produces.
//!
//! Vector layout, in order:
//!
//! | group      | width                  | encoding                          |
//! |------------|------------------------|-----------------------------------|
//! | `bank`     | `bank_vocab.len() + 1` | one-hot, trailing OOV slot        |
//! | `industry` | `ind_vocab.len() + 1`  | one-hot, trailing OOV slot        |
//! | `amount`   | 1                      | min-max scaled, clamped to [0, 1] |
//! | `year`     | 1                      | min-max scaled, clamped to [0, 1] |
//! | `month`    | 12                     | one-hot                           |
//! | `day`      | 1                      | day-of-month / 31                 |
//! | `text`     | `text_dim`             | hashed bag of words, L2-normed    |

mod groups;
mod text;

pub use groups::{FeatureGroup, GroupIndex};
pub use text::{clean_tokenize, fnv1a64, text_vector, TokenList};

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::ingest::EnrichedTransaction;

pub const MIN_TEXT_DIM: usize = 8;
pub const DEFAULT_TEXT_DIM: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("cannot fit a schema on an empty dataset")]
    EmptyDataset,
    #[error("text_dim must be at least {MIN_TEXT_DIM}, got {0}")]
    TextDim(usize),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("feature vector {sha} has schema version {found}, expected {expected}")]
    VersionMismatch { sha: String, found: u64, expected: u64 },
    #[error("feature store line {line}: {message}")]
    Store { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered, duplicate-free category list. Lookups that miss map to the
/// trailing out-of-vocabulary slot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary(Vec<String>);

impl Vocabulary {
    /// Sorted distinct values.
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = values.into_iter().collect();
        Vocabulary(set.into_iter().map(str::to_string).collect())
    }

    pub fn from_ordered(values: Vec<String>) -> Result<Self, FeatureError> {
        let distinct: BTreeSet<&String> = values.iter().collect();
        if distinct.len() != values.len() {
            return Err(FeatureError::InvalidSchema("duplicate vocabulary entry".into()));
        }
        Ok(Vocabulary(values))
    }

    pub fn values(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Width of the one-hot encoding, OOV slot included.
    pub fn width(&self) -> usize {
        self.0.len() + 1
    }

    pub fn slot(&self, value: &str) -> usize {
        self.0.iter().position(|v| v == value).unwrap_or(self.0.len())
    }
}

/// One-hot over `vocab` plus a trailing OOV slot.
pub fn one_hot(value: &str, vocab: &Vocabulary) -> Vec<f64> {
    let mut out = vec![0.0; vocab.width()];
    out[vocab.slot(value)] = 1.0;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().fold(None, |acc, v| match acc {
            None => Some(MinMaxScaler { min: v, max: v }),
            Some(s) => Some(MinMaxScaler {
                min: s.min.min(v),
                max: s.max.max(v),
            }),
        })
    }

    /// `(x - min) / (max - min)` clamped to `[0, 1]`; a degenerate scaler maps
    /// everything to 0.
    pub fn apply(&self, x: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0.0;
        }
        ((x - self.min) / span).clamp(0.0, 1.0)
    }

    /// True when `x` falls outside the fitted range and [`apply`](Self::apply)
    /// will clamp it.
    pub fn clamps(&self, x: f64) -> bool {
        x < self.min || x > self.max
    }
}

pub fn apply_scaler(scaler: &MinMaxScaler, x: f64) -> f64 {
    scaler.apply(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateEncoding {
    pub year_scaler: MinMaxScaler,
    pub day_scaler: MinMaxScaler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u64,
    pub bank_vocab: Vocabulary,
    pub industry_vocab: Vocabulary,
    pub amount_scaler: MinMaxScaler,
    pub date_encoding: DateEncoding,
    pub text_dim: usize,
}

impl FeatureSchema {
    pub fn dimension(&self) -> usize {
        self.group_index().dimension()
    }

    pub fn group_index(&self) -> GroupIndex {
        GroupIndex::from_widths([
            self.bank_vocab.width(),
            self.industry_vocab.width(),
            1,
            1,
            12,
            1,
            self.text_dim,
        ])
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.text_dim < MIN_TEXT_DIM {
            return Err(FeatureError::TextDim(self.text_dim));
        }
        Vocabulary::from_ordered(self.bank_vocab.0.clone())?;
        Vocabulary::from_ordered(self.industry_vocab.0.clone())?;
        for (name, s) in [
            ("amount", self.amount_scaler),
            ("year", self.date_encoding.year_scaler),
            ("day", self.date_encoding.day_scaler),
        ] {
            if !(s.min.is_finite() && s.max.is_finite() && s.min <= s.max) {
                return Err(FeatureError::InvalidSchema(format!("{name} scaler min > max")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FeatureError> {
        let schema: FeatureSchema =
            serde_json::from_slice(bytes).map_err(|e| FeatureError::InvalidSchema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }
}

/// Fits vocabularies and scalers on `dataset`. The version is one past
/// `previous`'s, or 1 for a first fit.
pub fn fit_schema(
    dataset: &[EnrichedTransaction],
    text_dim: usize,
    previous: Option<&FeatureSchema>,
) -> Result<FeatureSchema, FeatureError> {
    if text_dim < MIN_TEXT_DIM {
        return Err(FeatureError::TextDim(text_dim));
    }
    let amount_scaler =
        MinMaxScaler::fit(dataset.iter().map(|t| t.raw.amount)).ok_or(FeatureError::EmptyDataset)?;
    let year_scaler = MinMaxScaler::fit(dataset.iter().map(|t| t.raw.date.year() as f64))
        .ok_or(FeatureError::EmptyDataset)?;
    Ok(FeatureSchema {
        version: previous.map_or(1, |p| p.version + 1),
        bank_vocab: Vocabulary::fit(dataset.iter().map(|t| t.bank.as_str())),
        industry_vocab: Vocabulary::fit(dataset.iter().map(|t| t.industry.as_str())),
        amount_scaler,
        date_encoding: DateEncoding {
            year_scaler,
            day_scaler: MinMaxScaler { min: 0.0, max: 31.0 },
        },
        text_dim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sha: String,
    pub schema_version: u64,
    pub values: Vec<f64>,
    pub group_index: GroupIndex,
}

impl FeatureVector {
    pub fn group(&self, group: FeatureGroup) -> &[f64] {
        &self.values[self.group_index.range(group)]
    }
}

pub fn build_feature_vector(tx: &EnrichedTransaction, schema: &FeatureSchema) -> FeatureVector {
    let mut values = Vec::with_capacity(schema.dimension());
    values.extend(one_hot(&tx.bank, &schema.bank_vocab));
    values.extend(one_hot(&tx.industry, &schema.industry_vocab));
    values.push(schema.amount_scaler.apply(tx.raw.amount));

    let date = tx.raw.date;
    values.push(schema.date_encoding.year_scaler.apply(date.year() as f64));
    let mut month = [0.0; 12];
    month[date.month0() as usize] = 1.0;
    values.extend(month);
    values.push(schema.date_encoding.day_scaler.apply(date.day() as f64));

    let tokens = clean_tokenize(&tx.raw.description);
    values.extend(text_vector(&tokens, schema.text_dim));

    FeatureVector {
        sha: tx.raw.sha.clone(),
        schema_version: schema.version,
        values,
        group_index: schema.group_index(),
    }
}

pub fn build_all(txs: &[EnrichedTransaction], schema: &FeatureSchema, exec: Execution) -> Vec<FeatureVector> {
    exec.map(txs, |tx| build_feature_vector(tx, schema))
}

/// Writes one JSON object per line.
pub fn write_feature_store<W: Write>(mut out: W, vectors: &[FeatureVector]) -> Result<(), FeatureError> {
    for v in vectors {
        serde_json::to_writer(&mut out, v).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a feature-store file, checking every record against `schema`.
pub fn read_feature_store<R: BufRead>(
    input: R,
    schema: &FeatureSchema,
) -> Result<Vec<FeatureVector>, FeatureError> {
    let expected_index = schema.group_index();
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fv: FeatureVector = serde_json::from_str(&line).map_err(|e| FeatureError::Store {
            line: i + 1,
            message: e.to_string(),
        })?;
        if fv.schema_version != schema.version {
            return Err(FeatureError::VersionMismatch {
                sha: fv.sha,
                found: fv.schema_version,
                expected: schema.version,
            });
        }
        if fv.group_index != expected_index || fv.values.len() != expected_index.dimension() {
            return Err(FeatureError::Store {
                line: i + 1,
                message: "layout does not match schema".into(),
            });
        }
        out.push(fv);
    }
    Ok(out)
}
