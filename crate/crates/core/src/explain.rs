//! Permutation importance per feature group, the derived feature-selection
//! feedback, and single-transaction what-if probes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::featurize::{build_feature_vector, FeatureGroup, FeatureSchema, FeatureVector};
use crate::ingest::{timestamp, EnrichedTransaction};
use crate::label::{ClassLabel, NUM_CLASSES};
use crate::metrics::{confusion, macro_f1};
use crate::pnn::{ClassProbabilities, PnnError, PnnModel, Prediction};

pub const DEFAULT_REPEATS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("unknown metric {0:?} (expected macro_f1 or accuracy)")]
    UnknownMetric(String),
    #[error("permutation importance needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("class {0} is absent from the evaluation data")]
    MissingClass(ClassLabel),
    #[error("unknown override field {0:?}")]
    UnknownField(String),
    #[error("invalid value for {field}: {message}")]
    InvalidValue { field: String, message: String },
    #[error("schema version {schema} does not match model schema version {model}")]
    SchemaMismatch { schema: u64, model: u64 },
    #[error(transparent)]
    Model(#[from] PnnError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    #[default]
    MacroF1,
    Accuracy,
}

impl ImportanceMetric {
    pub fn score(self, actual: &[ClassLabel], predicted: &[ClassLabel]) -> f64 {
        match self {
            ImportanceMetric::MacroF1 => {
                macro_f1(&confusion(actual.iter().copied().zip(predicted.iter().copied())))
            }
            ImportanceMetric::Accuracy => {
                let hits = actual.iter().zip(predicted).filter(|(a, p)| a == p).count();
                hits as f64 / actual.len().max(1) as f64
            }
        }
    }
}

impl fmt::Display for ImportanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImportanceMetric::MacroF1 => "macro_f1",
            ImportanceMetric::Accuracy => "accuracy",
        })
    }
}

impl FromStr for ImportanceMetric {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "macro_f1" | "f1" => Ok(ImportanceMetric::MacroF1),
            "accuracy" => Ok(ImportanceMetric::Accuracy),
            _ => Err(ExplainError::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupImportance {
    pub group: FeatureGroup,
    pub mean_drop: f64,
    pub std_drop: f64,
    pub repeats: usize,
    /// `baseline - permuted` for each repeat, in repeat order.
    pub drops: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub model_id: String,
    pub metric: ImportanceMetric,
    pub baseline: f64,
    pub groups: Vec<GroupImportance>,
    pub seed: u64,
}

impl ImportanceReport {
    pub fn group(&self, group: FeatureGroup) -> Option<&GroupImportance> {
        self.groups.iter().find(|g| g.group == group)
    }

    /// Groups by descending mean drop; ties keep canonical group order.
    pub fn ranking(&self) -> Vec<FeatureGroup> {
        let mut gs: Vec<&GroupImportance> = self.groups.iter().collect();
        gs.sort_by(|a, b| b.mean_drop.total_cmp(&a.mean_drop).then(a.group.cmp(&b.group)));
        gs.into_iter().map(|g| g.group).collect()
    }
}

/// Random stream for one (group, repeat) task, derived from the report seed.
fn task_rng(seed: u64, group: usize, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((group as u64) << 32) | repeat as u64);
    rng
}

/// Shuffles each feature group's columns jointly across rows and reports the
/// resulting metric drop. Rows are put in sha order first, so the result does
/// not depend on the order of `dataset`.
pub fn permutation_importance(
    model: &PnnModel,
    dataset: &[(&FeatureVector, ClassLabel)],
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
    exec: Execution,
) -> Result<ImportanceReport, ExplainError> {
    if dataset.len() < 2 {
        return Err(ExplainError::TooFewRows(dataset.len()));
    }
    if repeats == 0 {
        return Err(ExplainError::NoRepeats);
    }
    if metric == ImportanceMetric::MacroF1 {
        if let Some(c) = ClassLabel::ALL
            .into_iter()
            .find(|c| !dataset.iter().any(|(_, l)| l == c))
        {
            return Err(ExplainError::MissingClass(c));
        }
    }

    let mut rows: Vec<&(&FeatureVector, ClassLabel)> = dataset.iter().collect();
    rows.sort_by(|a, b| a.0.sha.cmp(&b.0.sha));
    let labels: Vec<ClassLabel> = rows.iter().map(|(_, l)| *l).collect();
    let values: Vec<&[f64]> = rows.iter().map(|(fv, _)| fv.values.as_slice()).collect();
    let index = rows[0].0.group_index.clone();

    let baseline_pred = model.predict_rows(&values, exec)?;
    let baseline = metric.score(&labels, &baseline_pred);

    let n = rows.len();
    let tasks = FeatureGroup::ALL.len() * repeats;
    let drops: Vec<Result<f64, PnnError>> = exec.map_range(tasks, |task| {
        let (g, r) = (task / repeats, task % repeats);
        let range = index.range(FeatureGroup::ALL[g]);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut task_rng(seed, g, r));

        let mut predicted = Vec::with_capacity(n);
        let mut row = Vec::new();
        for (i, &src) in perm.iter().enumerate() {
            row.clear();
            row.extend_from_slice(values[i]);
            row[range.clone()].copy_from_slice(&values[src][range.clone()]);
            predicted.push(model.predict(&row)?);
        }
        Ok(baseline - metric.score(&labels, &predicted))
    });
    let drops: Vec<f64> = drops.into_iter().collect::<Result<_, _>>()?;

    let groups = FeatureGroup::ALL
        .into_iter()
        .enumerate()
        .map(|(g, group)| {
            let ds = drops[g * repeats..(g + 1) * repeats].to_vec();
            let mean = ds.iter().sum::<f64>() / repeats as f64;
            let var = ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / repeats as f64;
            GroupImportance {
                group,
                mean_drop: mean,
                std_drop: var.sqrt(),
                repeats,
                drops: ds,
            }
        })
        .collect();

    Ok(ImportanceReport {
        model_id: model.model_id().to_string(),
        metric,
        baseline,
        groups,
        seed,
    })
}

/// Groups whose mean drop reaches `threshold`, most important first.
pub fn importance_feedback(report: &ImportanceReport, threshold: f64) -> Vec<FeatureGroup> {
    report
        .ranking()
        .into_iter()
        .filter(|g| report.group(*g).is_some_and(|gi| gi.mean_drop >= threshold))
        .collect()
}

pub const OVERRIDABLE_FIELDS: [&str; 5] = ["amount", "description", "bank", "industry", "date"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub sha: String,
    pub baseline: Prediction,
    pub modified: Prediction,
    pub overrides: BTreeMap<String, String>,
    /// `modified - baseline` per class.
    pub delta: ClassProbabilities,
    /// Remarks such as values clamped to the training range.
    pub notes: Vec<String>,
}

/// Applies `overrides` to a copy of `base`, rebuilds its feature vector under
/// `schema` and compares the two predictions. Nothing is written anywhere.
pub fn what_if(
    model: &PnnModel,
    schema: &FeatureSchema,
    base: &EnrichedTransaction,
    overrides: &BTreeMap<String, String>,
) -> Result<WhatIfResult, ExplainError> {
    if schema.version != model.schema_version() {
        return Err(ExplainError::SchemaMismatch {
            schema: schema.version,
            model: model.schema_version(),
        });
    }
    let mut probe = base.clone();
    let mut notes = Vec::new();
    for (field, value) in overrides {
        let invalid = |message: String| ExplainError::InvalidValue {
            field: field.clone(),
            message,
        };
        match field.as_str() {
            "amount" => {
                let amount: f64 = value
                    .trim()
                    .parse()
                    .ok()
                    .filter(|a: &f64| a.is_finite())
                    .ok_or_else(|| invalid(format!("{value:?} is not a finite number")))?;
                if schema.amount_scaler.clamps(amount) {
                    notes.push(format!(
                        "amount {amount} outside training range [{}, {}]; scaled value clamped",
                        schema.amount_scaler.min, schema.amount_scaler.max
                    ));
                }
                probe.raw.amount = amount;
            }
            "description" => probe.raw.description = value.clone(),
            "bank" => {
                if schema.bank_vocab.slot(value) == schema.bank_vocab.len() {
                    notes.push(format!("bank {value:?} is out of vocabulary"));
                }
                probe.bank = value.clone();
            }
            "industry" => {
                if schema.industry_vocab.slot(value) == schema.industry_vocab.len() {
                    notes.push(format!("industry {value:?} is out of vocabulary"));
                }
                probe.industry = value.clone();
            }
            "date" => {
                probe.raw.date = timestamp::parse(value)
                    .ok_or_else(|| invalid(format!("{value:?} is not an ISO-8601 date")))?;
            }
            other => return Err(ExplainError::UnknownField(other.to_string())),
        }
    }

    let baseline = model.predict_vector(&build_feature_vector(base, schema))?;
    let modified = model.predict_vector(&build_feature_vector(&probe, schema))?;
    let mut delta = [0.0; NUM_CLASSES];
    for (k, d) in delta.iter_mut().enumerate() {
        *d = modified.probabilities.0[k] - baseline.probabilities.0[k];
    }
    Ok(WhatIfResult {
        sha: base.sha().to_string(),
        baseline,
        modified,
        overrides: overrides.clone(),
        delta: ClassProbabilities(delta),
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{build_all, fit_schema, FeatureGroup};
    use crate::fixtures;
    use crate::pnn::PriorMode;

    fn report_with(drops: &[(FeatureGroup, f64)]) -> ImportanceReport {
        ImportanceReport {
            model_id: "m".into(),
            metric: ImportanceMetric::MacroF1,
            baseline: 1.0,
            groups: drops
                .iter()
                .map(|&(group, d)| GroupImportance {
                    group,
                    mean_drop: d,
                    std_drop: 0.0,
                    repeats: 1,
                    drops: vec![d],
                })
                .collect(),
            seed: 0,
        }
    }

    #[test]
    fn feedback_examples() {
        use FeatureGroup::*;
        let r = report_with(&[(Bank, 0.0), (Amount, 0.05), (Text, 0.21)]);
        assert_eq!(importance_feedback(&r, 0.01), [Text, Amount]);
        assert_eq!(importance_feedback(&r, 0.0), [Text, Amount, Bank]);
        assert!(importance_feedback(&r, 0.5).is_empty());

        let tie = report_with(&[(Text, 0.1), (Bank, 0.1), (Day, -0.02)]);
        assert_eq!(importance_feedback(&tie, -1.0), [Bank, Text, Day]);
    }

    #[test]
    fn metric_names() {
        assert_eq!(
            "macro_f1".parse::<ImportanceMetric>().unwrap(),
            ImportanceMetric::MacroF1
        );
        assert_eq!(
            "accuracy".parse::<ImportanceMetric>().unwrap(),
            ImportanceMetric::Accuracy
        );
        assert!(matches!(
            "auc".parse::<ImportanceMetric>(),
            Err(ExplainError::UnknownMetric(_))
        ));
    }

    #[test]
    fn task_streams_differ() {
        use rand::Rng;
        let a: u64 = task_rng(1, 0, 0).random();
        let b: u64 = task_rng(1, 0, 1).random();
        let c: u64 = task_rng(1, 1, 0).random();
        assert!(a != b && a != c && b != c);
        assert_eq!(a, task_rng(1, 0, 0).random::<u64>());
    }

    #[test]
    fn importance_preconditions() {
        let f = fixtures::reference_fixture();
        let one = [(&f.features[0], ClassLabel::Funding)];
        assert!(matches!(
            permutation_importance(
                &f.model,
                &one,
                ImportanceMetric::Accuracy,
                1,
                0,
                Execution::Sequential
            ),
            Err(ExplainError::TooFewRows(1))
        ));
        let two: Vec<_> = f
            .features
            .iter()
            .take(2)
            .map(|fv| (fv, ClassLabel::Funding))
            .collect();
        assert!(matches!(
            permutation_importance(
                &f.model,
                &two,
                ImportanceMetric::MacroF1,
                1,
                0,
                Execution::Sequential
            ),
            Err(ExplainError::MissingClass(_))
        ));
        assert!(matches!(
            permutation_importance(
                &f.model,
                &two,
                ImportanceMetric::Accuracy,
                0,
                0,
                Execution::Sequential
            ),
            Err(ExplainError::NoRepeats)
        ));
    }

    #[test]
    fn fixture_importance_is_order_independent_and_seeded() {
        let f = fixtures::reference_fixture();
        let rows: Vec<_> = f
            .features
            .iter()
            .zip(fixtures::reference_rows())
            .map(|(fv, r)| (fv, r.predicted))
            .collect();
        let mut reversed = rows.clone();
        reversed.reverse();
        let run = |d: &[(&FeatureVector, ClassLabel)], exec| {
            permutation_importance(&f.model, d, ImportanceMetric::MacroF1, 4, 9, exec).unwrap()
        };
        let a = run(&rows, Execution::Sequential);
        assert_eq!(a, run(&reversed, Execution::Parallel));
        assert_eq!(a.groups.len(), FeatureGroup::ALL.len());
        assert!(a.groups.iter().all(|g| g.repeats == 4 && g.drops.len() == 4));
    }

    #[test]
    fn what_if_identity_and_errors() {
        let f = fixtures::reference_fixture();
        let base = &f.transactions[0];
        let r = what_if(&f.model, &f.schema, base, &BTreeMap::new()).unwrap();
        assert_eq!(r.baseline, r.modified);
        assert!(r.delta.0.iter().all(|d| *d == 0.0));
        assert!(r.notes.is_empty());

        let bad = BTreeMap::from([("colour".to_string(), "red".to_string())]);
        let err = what_if(&f.model, &f.schema, base, &bad).unwrap_err();
        assert_eq!(err.to_string(), "unknown override field \"colour\"");

        let bad = BTreeMap::from([("amount".to_string(), "lots".to_string())]);
        assert!(matches!(
            what_if(&f.model, &f.schema, base, &bad),
            Err(ExplainError::InvalidValue { .. })
        ));
    }

    #[test]
    fn what_if_amount_clamps() {
        let f = fixtures::reference_fixture();
        let base = &f.transactions[0];
        let big = BTreeMap::from([("amount".to_string(), "1e9".to_string())]);
        let r = what_if(&f.model, &f.schema, base, &big).unwrap();
        assert_eq!(r.notes.len(), 1);
        assert!(r.notes[0].contains("clamped"));
        let mut probe = base.clone();
        probe.raw.amount = 1e9;
        let fv = build_feature_vector(&probe, &f.schema);
        assert_eq!(fv.group(FeatureGroup::Amount), [1.0]);
        let sum: f64 = r.modified.probabilities.0.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let delta_sum: f64 = r.delta.0.iter().sum();
        assert!(delta_sum.abs() < 1e-9);
    }

    #[test]
    fn what_if_rejects_stale_schema() {
        let f = fixtures::reference_fixture();
        let newer = fit_schema(&f.transactions, 32, Some(&f.schema)).unwrap();
        assert!(matches!(
            what_if(&f.model, &newer, &f.transactions[0], &BTreeMap::new()),
            Err(ExplainError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn description_override_flips_to_funding() {
        // Separable model: funding exemplars mention loans, the rest do not.
        let txs = fixtures::reference_transactions();
        let labels = [
            ClassLabel::IncomeInvoice,
            ClassLabel::Funding,
            ClassLabel::Funding,
            ClassLabel::IncomeCash,
            ClassLabel::IncomeCash,
            ClassLabel::Funding,
            ClassLabel::Other,
            ClassLabel::IncomeCheque,
            ClassLabel::IncomeInvoice,
        ];
        let mut txs = txs;
        for (t, l) in txs.iter_mut().zip(labels) {
            t.raw.description = match l {
                ClassLabel::Funding => "LOAN FUNDING ADVANCE",
                ClassLabel::IncomeInvoice => "INVOICE MYOB",
                ClassLabel::IncomeCash => "CASH BRANCH",
                ClassLabel::IncomeCheque => "CHEQUE CLEARANCE",
                ClassLabel::Other => "INTERNAL SWEEP",
            }
            .to_string();
            t.raw.amount = 1000.0;
            t.bank = "NAB".into();
            t.industry = "Retail".into();
        }
        let schema = fit_schema(&txs, 64, None).unwrap();
        let fvs = build_all(&txs, &schema, Execution::Sequential);
        let labeled: Vec<_> = fvs.iter().zip(labels).collect();
        let model = PnnModel::train(&labeled, 0.2, PriorMode::Uniform).unwrap();

        let base = &txs[0];
        let before = what_if(&model, &schema, base, &BTreeMap::new()).unwrap();
        assert_eq!(before.baseline.final_class, ClassLabel::IncomeInvoice);
        let o = BTreeMap::from([("description".to_string(), "LOAN FUNDING ADVANCE".to_string())]);
        let after = what_if(&model, &schema, base, &o).unwrap();
        assert_eq!(after.modified.final_class, ClassLabel::Funding);
        assert!(after.delta.get(ClassLabel::Funding) > 0.0);
    }
}
