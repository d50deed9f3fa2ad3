//! Probabilistic Neural Network over the five credit classes.
//!
//! The pattern layer holds one Gaussian unit per stored exemplar; the
//! summation layer averages them per class:
//!
//! ```text
//! f_k(x) = 1/n_k · Σ_i exp(-‖x - x_ki‖² / 2σ²)
//! P(k|x) = π_k f_k(x) / Σ_j π_j f_j(x)
//! ```
//!
//! When every weighted density underflows to zero the prior distribution is
//! returned so callers always receive a proper distribution.

mod model;
mod wire;

pub use model::{PnnModel, PriorMode, SigmaSearch};
pub use wire::{FinalClassification, FinalOutput, ProbabilityOutput, ProbabilityRecord};

use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::label::{ClassLabel, NUM_CLASSES};

pub const DEFAULT_SIGMA: f64 = 0.2;
pub const SIGMA_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 1.0];

#[derive(Debug, thiserror::Error)]
pub enum PnnError {
    #[error("class {0} has no exemplars")]
    MissingClass(ClassLabel),
    #[error("inconsistent vector length: expected {expected}, found {found}")]
    InconsistentLength { expected: usize, found: usize },
    #[error("mixed schema versions in training data ({0} and {1})")]
    MixedSchema(u64, u64),
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("input has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model document: {0}")]
    InvalidModel(String),
    #[error("empty sigma grid or validation set")]
    EmptySearch,
}

/// Per-class probabilities in canonical class order. Serialized as a map keyed
/// by snake_case class names.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassProbabilities(pub [f64; NUM_CLASSES]);

impl ClassProbabilities {
    pub fn get(&self, class: ClassLabel) -> f64 {
        self.0[class.index()]
    }

    pub fn as_array(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    /// First class holding the maximum; ties resolve in canonical order.
    pub fn argmax(&self) -> ClassLabel {
        argmax(&self.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassLabel, f64)> + '_ {
        ClassLabel::ALL.into_iter().map(|c| (c, self.0[c.index()]))
    }
}

pub(crate) fn argmax(values: &[f64; NUM_CLASSES]) -> ClassLabel {
    let mut best = 0;
    for i in 1..NUM_CLASSES {
        if values[i] > values[best] {
            best = i;
        }
    }
    ClassLabel::ALL[best]
}

impl Serialize for ClassProbabilities {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(NUM_CLASSES))?;
        for (c, p) in self.iter() {
            map.serialize_entry(c.probability_key(), &p)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ClassProbabilities {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ClassProbabilities;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of class name to probability")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> Result<Self::Value, A::Error> {
                let mut out = [f64::NAN; NUM_CLASSES];
                while let Some((k, v)) = m.next_entry::<String, f64>()? {
                    let c: ClassLabel = k.parse().map_err(de::Error::custom)?;
                    out[c.index()] = v;
                }
                if let Some(c) = ClassLabel::ALL.into_iter().find(|c| out[c.index()].is_nan()) {
                    return Err(de::Error::custom(format!("missing probability for {c}")));
                }
                Ok(ClassProbabilities(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sha: String,
    pub probabilities: ClassProbabilities,
    #[serde(rename = "final")]
    pub final_class: ClassLabel,
    pub model_id: String,
}

impl Prediction {
    /// Builds a prediction from non-negative scores that need not sum to one,
    /// e.g. rounded probabilities copied from a report.
    pub fn from_scores(
        sha: impl Into<String>,
        scores: [f64; NUM_CLASSES],
        model_id: impl Into<String>,
    ) -> Self {
        let total: f64 = scores.iter().sum();
        let probs = if total > 0.0 && total.is_finite() {
            scores.map(|s| s / total)
        } else {
            [1.0 / NUM_CLASSES as f64; NUM_CLASSES]
        };
        let probabilities = ClassProbabilities(probs);
        Prediction {
            sha: sha.into(),
            final_class: probabilities.argmax(),
            probabilities,
            model_id: model_id.into(),
        }
    }
}

/// Normalises `prior · density` into a posterior. Falls back to the priors
/// when the weighted densities sum to zero (or are not finite).
pub fn posterior_from_densities(
    densities: &[f64; NUM_CLASSES],
    priors: &[f64; NUM_CLASSES],
) -> ClassProbabilities {
    let mut weighted = [0.0; NUM_CLASSES];
    for k in 0..NUM_CLASSES {
        weighted[k] = priors[k] * densities[k];
    }
    let total: f64 = weighted.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return ClassProbabilities(*priors);
    }
    ClassProbabilities(weighted.map(|w| w / total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_argmax_rows() {
        let row1 = ClassProbabilities([0.14, 0.328, 0.325, 0.074, 0.141]);
        assert_eq!(row1.argmax(), ClassLabel::IncomeInvoice);
        let row2 = ClassProbabilities([0.41, 0.023, 0.273, 0.005, 0.34]);
        assert_eq!(row2.argmax(), ClassLabel::Funding);
        let uniform = ClassProbabilities([0.2; NUM_CLASSES]);
        assert_eq!(uniform.argmax(), ClassLabel::Funding);
    }

    #[test]
    fn from_scores_normalises_without_moving_argmax() {
        let p = Prediction::from_scores("x", [0.551, 0.062, 0.021, 0.35, 0.185], "m");
        let sum: f64 = p.probabilities.as_array().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(p.final_class, ClassLabel::Funding);
    }

    #[test]
    fn zero_total_falls_back_to_priors() {
        let priors = [0.1, 0.2, 0.3, 0.25, 0.15];
        let p = posterior_from_densities(&[0.0; NUM_CLASSES], &priors);
        assert_eq!(p.0, priors);
    }

    #[test]
    fn probabilities_serialize_with_snake_keys() {
        let p = ClassProbabilities([0.1, 0.2, 0.3, 0.25, 0.15]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(
            json,
            r#"{"funding":0.1,"income_invoice":0.2,"income_cash":0.3,"income_cheque":0.25,"other":0.15}"#
        );
        assert_eq!(serde_json::from_str::<ClassProbabilities>(&json).unwrap(), p);
        assert!(serde_json::from_str::<ClassProbabilities>(r#"{"funding":1.0}"#).is_err());
    }
}
