//! Confusion matrices and the evaluation report.
//!
//! Per class (one-vs-rest): accuracy `(TP+TN)/N`, precision `TP/(TP+FP)`,
//! recall `TP/(TP+FN)`, F-measure `2PR/(P+R)` and support (actual count).
//! Overall: accuracy `trace/N` and Cohen's kappa `(p-q)/(1-q)` where `p` is
//! the observed agreement and `q` the chance agreement from the marginals.
//! Any 0/0 rate is reported as 0 and flagged.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::label::{ClassLabel, NUM_CLASSES};
use crate::pnn::Prediction;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot evaluate an empty confusion matrix")]
    Empty,
    #[error("sha {0} has a prediction but no actual class")]
    MissingActual(String),
    #[error("sha {0} has an actual class but no prediction")]
    MissingPrediction(String),
    #[error("duplicate sha {0}")]
    DuplicateSha(String),
}

/// 5×5 counts indexed `[actual][predicted]` in canonical class order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
    total: u64,
}

impl ConfusionMatrix {
    pub fn add(&mut self, actual: ClassLabel, predicted: ClassLabel) {
        self.counts[actual.index()][predicted.index()] += 1;
        self.total += 1;
    }

    pub fn get(&self, actual: ClassLabel, predicted: ClassLabel) -> u64 {
        self.counts[actual.index()][predicted.index()]
    }

    pub fn counts(&self) -> &[[u64; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|k| self.counts[k][k]).sum()
    }

    /// Number of samples whose actual class is `class`.
    pub fn actual_count(&self, class: ClassLabel) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    /// Number of samples predicted as `class`.
    pub fn predicted_count(&self, class: ClassLabel) -> u64 {
        self.counts.iter().map(|row| row[class.index()]).sum()
    }
}

pub fn confusion(pairs: impl IntoIterator<Item = (ClassLabel, ClassLabel)>) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for (actual, predicted) in pairs {
        cm.add(actual, predicted);
    }
    cm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub class: ClassLabel,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

pub fn per_class_counts(cm: &ConfusionMatrix, class: ClassLabel) -> ClassCounts {
    let tp = cm.get(class, class);
    let fp = cm.predicted_count(class) - tp;
    let fn_ = cm.actual_count(class) - tp;
    ClassCounts {
        class,
        tp,
        fp,
        tn: cm.total() - tp - fp - fn_,
        fn_,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateName {
    Precision,
    Recall,
    FMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: ClassLabel,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub support: u64,
    pub undefined_flags: Vec<RateName>,
}

impl ClassReport {
    /// Sensitivity is reported as recall.
    pub fn sensitivity(&self) -> f64 {
        self.recall
    }

    pub fn is_undefined(&self, rate: RateName) -> bool {
        self.undefined_flags.contains(&rate)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn class_report(cm: &ConfusionMatrix, class: ClassLabel) -> ClassReport {
    let c = per_class_counts(cm, class);
    let mut undefined_flags = Vec::new();
    let mut flag = |rate, v: Option<f64>| {
        v.unwrap_or_else(|| {
            undefined_flags.push(rate);
            0.0
        })
    };
    let precision = flag(RateName::Precision, ratio(c.tp, c.tp + c.fp));
    let recall = flag(RateName::Recall, ratio(c.tp, c.tp + c.fn_));
    let f_measure = flag(
        RateName::FMeasure,
        (precision + recall > 0.0).then(|| 2.0 * precision * recall / (precision + recall)),
    );
    ClassReport {
        label: class,
        accuracy: ratio(c.tp + c.tn, cm.total()).unwrap_or(0.0),
        precision,
        recall,
        f_measure,
        support: cm.actual_count(class),
        undefined_flags,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub overall_accuracy: f64,
    pub cohen_kappa: f64,
    /// Observed agreement.
    pub p: f64,
    /// Chance agreement.
    pub q: f64,
    pub classes: Vec<ClassReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

impl EvaluationReport {
    pub fn class(&self, label: ClassLabel) -> &ClassReport {
        &self.classes[label.index()]
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = Some(model_id.into());
        self
    }
}

pub fn evaluate(cm: &ConfusionMatrix) -> Result<EvaluationReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let n = total as f64;
    let p = cm.trace() as f64 / n;
    let q = ClassLabel::ALL
        .into_iter()
        .map(|c| cm.actual_count(c) as f64 * cm.predicted_count(c) as f64)
        .sum::<f64>()
        / (n * n);
    // q == 1 only when every sample sits in one diagonal cell, so p == 1 too.
    let cohen_kappa = if q >= 1.0 { 1.0 } else { (p - q) / (1.0 - q) };
    Ok(EvaluationReport {
        overall_accuracy: p,
        cohen_kappa,
        p,
        q,
        classes: ClassLabel::ALL.into_iter().map(|c| class_report(cm, c)).collect(),
        model_id: None,
    })
}

/// Mean F-measure over classes that occur as actual or predicted labels.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let present: Vec<ClassLabel> = ClassLabel::ALL
        .into_iter()
        .filter(|&c| cm.actual_count(c) + cm.predicted_count(c) > 0)
        .collect();
    if present.is_empty() {
        return 0.0;
    }
    present
        .iter()
        .map(|&c| class_report(cm, c).f_measure)
        .sum::<f64>()
        / present.len() as f64
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segregation {
    pub correct: Vec<String>,
    pub incorrect: Vec<String>,
}

/// Splits predictions by whether the final class matches the actual class.
/// Output order follows `predictions`.
pub fn segregate(
    predictions: &[Prediction],
    actuals: &[(String, ClassLabel)],
) -> Result<Segregation, MetricsError> {
    let mut truth: HashMap<&str, ClassLabel> = HashMap::with_capacity(actuals.len());
    for (sha, label) in actuals {
        if truth.insert(sha.as_str(), *label).is_some() {
            return Err(MetricsError::DuplicateSha(sha.clone()));
        }
    }
    let mut out = Segregation::default();
    let mut seen = std::collections::HashSet::with_capacity(predictions.len());
    for p in predictions {
        if !seen.insert(p.sha.as_str()) {
            return Err(MetricsError::DuplicateSha(p.sha.clone()));
        }
        let actual = truth
            .get(p.sha.as_str())
            .ok_or_else(|| MetricsError::MissingActual(p.sha.clone()))?;
        if *actual == p.final_class {
            out.correct.push(p.sha.clone());
        } else {
            out.incorrect.push(p.sha.clone());
        }
    }
    if let Some((sha, _)) = actuals.iter().find(|(s, _)| !seen.contains(s.as_str())) {
        return Err(MetricsError::MissingPrediction(sha.clone()));
    }
    Ok(out)
}
