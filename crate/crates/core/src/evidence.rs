//! The evidence store: transactions joined with their feature vectors,
//! predictions and (optional) actual classes, plus the discovery queries run
//! against it. Records are kept in sha order so every query result is
//! independent of insertion order.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::featurize::{FeatureGroup, FeatureVector};
use crate::ingest::EnrichedTransaction;
use crate::label::{ClassLabel, NUM_CLASSES};
use crate::metrics::{class_report, confusion, evaluate, ClassReport, EvaluationReport, Segregation};
use crate::pnn::{PnnError, PnnModel, Prediction};

#[derive(Debug, thiserror::Error)]
pub enum EvidenceError {
    #[error("sha sets do not align; missing: {}", .0.join(", "))]
    Misaligned(Vec<String>),
    #[error("duplicate sha {0}")]
    DuplicateSha(String),
    #[error("sha {sha} has inconsistent {what}")]
    Inconsistent { sha: String, what: &'static str },
    #[error("predictions come from several models ({0} and {1})")]
    MixedModels(String, String),
    #[error("unknown sha {0}")]
    UnknownSha(String),
    #[error("search term is empty")]
    EmptyTerm,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("record {0} has no actual class")]
    MissingActual(String),
    #[error("unknown match mode {0:?} (expected contains or exact)")]
    UnknownMatchMode(String),
    #[error("evidence line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] PnnError),
}

/// One-vs-rest standing of a record relative to a focus class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "TP")]
    TruePositive,
    #[serde(rename = "FP")]
    FalsePositive,
    #[serde(rename = "TN")]
    TrueNegative,
    #[serde(rename = "FN")]
    FalseNegative,
}

impl Outcome {
    pub fn of(focus: ClassLabel, actual: ClassLabel, predicted: ClassLabel) -> Outcome {
        match (actual == focus, predicted == focus) {
            (true, true) => Outcome::TruePositive,
            (false, true) => Outcome::FalsePositive,
            (true, false) => Outcome::FalseNegative,
            (false, false) => Outcome::TrueNegative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correctness {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    #[default]
    Contains,
    Exact,
}

impl FromStr for MatchMode {
    type Err = EvidenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "contains" => Ok(MatchMode::Contains),
            "exact" => Ok(MatchMode::Exact),
            _ => Err(EvidenceError::UnknownMatchMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub tx: EnrichedTransaction,
    pub features: FeatureVector,
    pub prediction: Prediction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual: Option<ClassLabel>,
}

impl EvidenceRecord {
    pub fn sha(&self) -> &str {
        self.tx.sha()
    }

    pub fn predicted(&self) -> ClassLabel {
        self.prediction.final_class
    }

    /// `None` when the record is unlabeled.
    pub fn is_correct(&self) -> Option<bool> {
        self.actual.map(|a| a == self.prediction.final_class)
    }

    pub fn outcome(&self, focus: ClassLabel) -> Option<Outcome> {
        self.actual.map(|a| Outcome::of(focus, a, self.predicted()))
    }
}

/// Records split by correctness; unlabeled records are kept apart.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Partition<'a> {
    pub correct: Vec<&'a EvidenceRecord>,
    pub incorrect: Vec<&'a EvidenceRecord>,
    pub unlabeled: Vec<&'a EvidenceRecord>,
}

impl<'a> Partition<'a> {
    /// Files `r` under its correctness.
    pub fn push(&mut self, r: &'a EvidenceRecord) {
        match r.is_correct() {
            Some(true) => self.correct.push(r),
            Some(false) => self.incorrect.push(r),
            None => self.unlabeled.push(r),
        }
    }

    pub fn len(&self) -> usize {
        self.correct.len() + self.incorrect.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shas(&self) -> Vec<&'a str> {
        let mut all: Vec<&str> = self
            .correct
            .iter()
            .chain(&self.incorrect)
            .chain(&self.unlabeled)
            .map(|r| r.sha())
            .collect();
        all.sort_unstable();
        all
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationView<'a> {
    pub class: ClassLabel,
    pub records: Partition<'a>,
    /// Precision, recall (sensitivity) and F-measure of `class`; absent when
    /// the store has no labeled records.
    pub metrics: Option<ClassReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor<'a> {
    pub distance: f64,
    pub record: &'a EvidenceRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualizationPoint {
    pub sha: String,
    pub x: f64,
    pub outcome: Outcome,
    pub probability_of_focus: f64,
    pub actual: ClassLabel,
    pub predicted: ClassLabel,
}

#[derive(Debug, Clone, Default)]
pub struct EvidenceStore {
    model_id: Option<String>,
    records: Vec<EvidenceRecord>,
    by_sha: HashMap<String, usize>,
    by_predicted: [Vec<usize>; NUM_CLASSES],
    descriptions: Vec<String>,
    report: Option<EvaluationReport>,
    segregation: Segregation,
}

impl EvidenceStore {
    /// Joins the four inputs on sha. `actuals` may cover a subset of the
    /// transactions; every other input must cover exactly the same shas.
    pub fn load_join(
        transactions: Vec<EnrichedTransaction>,
        features: Vec<FeatureVector>,
        predictions: Vec<Prediction>,
        actuals: Vec<(String, ClassLabel)>,
    ) -> Result<EvidenceStore, EvidenceError> {
        let mut feats = index_unique(features, |f| f.sha.as_str())?;
        let mut preds = index_unique(predictions, |p| p.sha.as_str())?;
        let mut truth = index_unique(actuals, |(s, _)| s.as_str())?;
        let txs = index_unique(transactions, |t| t.sha())?;

        let mut missing: Vec<String> = txs
            .keys()
            .filter(|s| !feats.contains_key(*s) || !preds.contains_key(*s))
            .chain(feats.keys().filter(|s| !txs.contains_key(*s)))
            .chain(preds.keys().filter(|s| !txs.contains_key(*s)))
            .chain(truth.keys().filter(|s| !txs.contains_key(*s)))
            .cloned()
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        if !missing.is_empty() {
            missing.sort();
            return Err(EvidenceError::Misaligned(missing));
        }

        let records = txs
            .into_iter()
            .map(|(sha, tx)| EvidenceRecord {
                features: feats.remove(&sha).expect("aligned"),
                prediction: preds.remove(&sha).expect("aligned"),
                actual: truth.remove(&sha).map(|(_, c)| c),
                tx,
            })
            .collect();
        Self::from_records(records)
    }

    pub fn from_records(mut records: Vec<EvidenceRecord>) -> Result<EvidenceStore, EvidenceError> {
        records.sort_by(|a, b| a.sha().cmp(b.sha()));
        let mut store = EvidenceStore::default();
        for (i, r) in records.iter().enumerate() {
            let sha = r.sha();
            if r.features.sha != sha {
                return Err(EvidenceError::Inconsistent {
                    sha: sha.into(),
                    what: "features",
                });
            }
            if r.prediction.sha != sha {
                return Err(EvidenceError::Inconsistent {
                    sha: sha.into(),
                    what: "prediction",
                });
            }
            match &store.model_id {
                None => store.model_id = Some(r.prediction.model_id.clone()),
                Some(m) if *m != r.prediction.model_id => {
                    return Err(EvidenceError::MixedModels(
                        m.clone(),
                        r.prediction.model_id.clone(),
                    ))
                }
                Some(_) => {}
            }
            if store.by_sha.insert(sha.to_string(), i).is_some() {
                return Err(EvidenceError::DuplicateSha(sha.to_string()));
            }
            store.by_predicted[r.predicted().index()].push(i);
            store.descriptions.push(r.tx.raw.description.to_lowercase());
        }

        let labeled: Vec<&EvidenceRecord> = records.iter().filter(|r| r.actual.is_some()).collect();
        let cm = confusion(labeled.iter().map(|r| (r.actual.unwrap(), r.predicted())));
        store.report = evaluate(&cm).ok().map(|rep| match &store.model_id {
            Some(m) => rep.with_model_id(m.clone()),
            None => rep,
        });
        for r in &labeled {
            if r.is_correct() == Some(true) {
                store.segregation.correct.push(r.sha().to_string());
            } else {
                store.segregation.incorrect.push(r.sha().to_string());
            }
        }
        store.records = records;
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in sha order.
    pub fn records(&self) -> &[EvidenceRecord] {
        &self.records
    }

    pub fn get(&self, sha: &str) -> Option<&EvidenceRecord> {
        self.by_sha.get(sha).map(|&i| &self.records[i])
    }

    /// Id of the model whose predictions are cached; `None` for an empty store.
    pub fn model_id(&self) -> Option<&str> {
        self.model_id.as_deref()
    }

    /// True when the cached predictions were made by a different model.
    pub fn is_stale(&self, model_id: &str) -> bool {
        self.model_id.as_deref().is_some_and(|m| m != model_id)
    }

    /// Evaluation over the labeled records; `None` until some exist.
    pub fn report(&self) -> Option<&EvaluationReport> {
        self.report.as_ref()
    }

    pub fn segregation(&self) -> &Segregation {
        &self.segregation
    }

    pub fn has_actuals(&self) -> bool {
        self.records.iter().any(|r| r.actual.is_some())
    }

    /// Re-predicts every record with `model`, keeping transactions, features
    /// and actual classes.
    pub fn repredict(&self, model: &PnnModel, exec: Execution) -> Result<EvidenceStore, EvidenceError> {
        let preds = exec.map(&self.records, |r| model.predict_vector(&r.features));
        let records = self
            .records
            .iter()
            .zip(preds)
            .map(|(r, p)| {
                Ok(EvidenceRecord {
                    prediction: p?,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>, EvidenceError>>()?;
        Self::from_records(records)
    }

    /// Records predicted as `class`, split by correctness, with that class's
    /// metrics over the labeled part of the store.
    pub fn filter_by_classification(
        &self,
        class: ClassLabel,
        correctness: Option<Correctness>,
    ) -> ClassificationView<'_> {
        let mut records = Partition::default();
        for &i in &self.by_predicted[class.index()] {
            records.push(&self.records[i]);
        }
        match correctness {
            Some(Correctness::Correct) => {
                records.incorrect.clear();
                records.unlabeled.clear();
            }
            Some(Correctness::Incorrect) => {
                records.correct.clear();
                records.unlabeled.clear();
            }
            None => {}
        }
        ClassificationView {
            class,
            records,
            metrics: self.report.as_ref().map(|r| r.class(class).clone()),
        }
    }

    /// Case-insensitive search over raw descriptions.
    pub fn search(&self, term: &str, mode: MatchMode) -> Result<Partition<'_>, EvidenceError> {
        let needle = term.trim().to_lowercase();
        if needle.is_empty() {
            return Err(EvidenceError::EmptyTerm);
        }
        let mut out = Partition::default();
        for (r, d) in self.records.iter().zip(&self.descriptions) {
            let hit = match mode {
                MatchMode::Contains => d.contains(&needle),
                MatchMode::Exact => d.trim() == needle,
            };
            if hit {
                out.push(r);
            }
        }
        Ok(out)
    }

    /// The `k` records closest to `sha` by Euclidean distance over the chosen
    /// groups (all groups when `groups` is empty). Ties are broken by sha.
    pub fn neighbors(
        &self,
        sha: &str,
        groups: &[FeatureGroup],
        k: usize,
        exec: Execution,
    ) -> Result<Vec<Neighbor<'_>>, EvidenceError> {
        if k == 0 {
            return Err(EvidenceError::InvalidK);
        }
        let query = self
            .get(sha)
            .ok_or_else(|| EvidenceError::UnknownSha(sha.to_string()))?;
        let groups: &[FeatureGroup] = if groups.is_empty() {
            &FeatureGroup::ALL
        } else {
            groups
        };
        let index = &query.features.group_index;
        let ranges: Vec<_> = groups.iter().map(|g| index.range(*g)).collect();

        let distances = exec.map(&self.records, |r| {
            ranges
                .iter()
                .map(|rg| {
                    let a = &query.features.values[rg.clone()];
                    let b = &r.features.values[rg.clone()];
                    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
                })
                .sum::<f64>()
                .sqrt()
        });
        let mut out: Vec<Neighbor<'_>> = self
            .records
            .iter()
            .zip(distances)
            .filter(|(r, _)| r.sha() != sha)
            .map(|(record, distance)| Neighbor { distance, record })
            .collect();
        // Records are already in sha order and the sort is stable.
        out.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        out.truncate(k);
        Ok(out)
    }

    /// One point per labeled record: the record's value on `axis` (the L2
    /// norm for multi-column groups), its one-vs-rest outcome for `focus` and
    /// the probability assigned to `focus`. Unlabeled records are skipped; a
    /// store with no labeled records is an error.
    pub fn visualization_data(
        &self,
        focus: ClassLabel,
        axis: FeatureGroup,
    ) -> Result<Vec<VisualizationPoint>, EvidenceError> {
        if let Some(r) = self.records.first().filter(|_| !self.has_actuals()) {
            return Err(EvidenceError::MissingActual(r.sha().to_string()));
        }
        Ok(self
            .records
            .iter()
            .filter_map(|r| {
                let actual = r.actual?;
                let x = match r.features.group(axis) {
                    [v] => *v,
                    vs => vs.iter().map(|v| v * v).sum::<f64>().sqrt(),
                };
                Some(VisualizationPoint {
                    sha: r.sha().to_string(),
                    x,
                    outcome: Outcome::of(focus, actual, r.predicted()),
                    probability_of_focus: r.prediction.probabilities.get(focus),
                    actual,
                    predicted: r.predicted(),
                })
            })
            .collect())
    }

    /// Writes one record per line, in sha order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), EvidenceError> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<EvidenceStore, EvidenceError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| EvidenceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::from_records(records)
    }
}

/// Per-class metrics restricted to an arbitrary subset of records.
pub fn subset_report(records: &[&EvidenceRecord], class: ClassLabel) -> Option<ClassReport> {
    let cm = confusion(
        records
            .iter()
            .filter_map(|r| r.actual.map(|a| (a, r.predicted()))),
    );
    (cm.total() > 0).then(|| class_report(&cm, class))
}

fn index_unique<T>(
    items: Vec<T>,
    key: impl Fn(&T) -> &str,
) -> Result<std::collections::BTreeMap<String, T>, EvidenceError> {
    let mut out = std::collections::BTreeMap::new();
    for item in items {
        let k = key(&item).to_string();
        if out.contains_key(&k) {
            return Err(EvidenceError::DuplicateSha(k));
        }
        out.insert(k, item);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{build_all, fit_schema};
    use crate::fixtures;
    use crate::ingest::parse_raw_csv;
    use crate::label::ClassLabel::*;
    use crate::metrics::RateName;

    fn reference_store() -> EvidenceStore {
        let f = fixtures::reference_fixture();
        EvidenceStore::load_join(f.transactions, f.features, f.predictions, f.actuals).unwrap()
    }

    fn row_numbers(shas: &[&str]) -> Vec<usize> {
        shas.iter()
            .map(|s| s.trim_start_matches("REF_").parse().unwrap())
            .collect()
    }

    /// Store over the given transactions with a fixed prediction per row.
    fn store_with(
        txs: Vec<EnrichedTransaction>,
        predicted: &[ClassLabel],
        actual: &[Option<ClassLabel>],
    ) -> EvidenceStore {
        let schema = fit_schema(&txs, 16, None).unwrap();
        let features = build_all(&txs, &schema, Execution::Sequential);
        let preds = txs
            .iter()
            .zip(predicted)
            .map(|(t, c)| {
                let mut s = [0.1; 5];
                s[c.index()] = 0.6;
                Prediction::from_scores(t.sha(), s, "m")
            })
            .collect();
        let actuals = txs
            .iter()
            .zip(actual)
            .filter_map(|(t, a)| a.map(|a| (t.sha().to_string(), a)))
            .collect();
        EvidenceStore::load_join(txs, features, preds, actuals).unwrap()
    }

    #[test]
    fn reference_join_and_segregation() {
        let s = reference_store();
        assert_eq!(s.len(), 9);
        assert_eq!(s.segregation().correct.len(), 4);
        assert_eq!(s.segregation().incorrect.len(), 5);
        let r = s.report().unwrap();
        assert_eq!(r.overall_accuracy, 4.0 / 9.0);
        assert_eq!(r.model_id.as_deref(), s.model_id());
    }

    #[test]
    fn empty_store_defers_evaluation() {
        let s = EvidenceStore::load_join(vec![], vec![], vec![], vec![]).unwrap();
        assert!(s.is_empty());
        assert!(s.report().is_none());
        assert!(s.model_id().is_none());
    }

    #[test]
    fn misaligned_and_duplicate_shas() {
        let f = fixtures::reference_fixture();
        let mut feats = f.features.clone();
        feats.pop();
        let err = EvidenceStore::load_join(f.transactions.clone(), feats, f.predictions.clone(), vec![])
            .unwrap_err();
        assert_eq!(err.to_string(), "sha sets do not align; missing: REF_09");

        let mut preds = f.predictions.clone();
        preds.push(preds[0].clone());
        assert!(matches!(
            EvidenceStore::load_join(f.transactions, f.features, preds, vec![]),
            Err(EvidenceError::DuplicateSha(s)) if s == "REF_01"
        ));
    }

    #[test]
    fn filter_income_cash_incorrect() {
        let s = reference_store();
        let v = s.filter_by_classification(IncomeCash, Some(Correctness::Incorrect));
        assert_eq!(row_numbers(&v.records.shas()), [4, 5, 9]);
        assert!(v.records.correct.is_empty());
        let m = v.metrics.unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(!m.is_undefined(RateName::Precision));
        assert!(m.is_undefined(RateName::Recall));

        let both = s.filter_by_classification(Funding, None);
        assert_eq!(row_numbers(&both.records.shas()), [2, 3, 6]);
        let correct = s.filter_by_classification(Funding, Some(Correctness::Correct));
        let incorrect = s.filter_by_classification(Funding, Some(Correctness::Incorrect));
        assert_eq!(
            correct.records.len() + incorrect.records.len(),
            both.records.len()
        );
    }

    #[test]
    fn class_without_predictions() {
        let s = store_with(
            fixtures::table5_transactions(),
            &[Funding; 8],
            &[Some(Funding); 8],
        );
        let v = s.filter_by_classification(Other, None);
        assert!(v.records.is_empty());
        let m = v.metrics.unwrap();
        assert!(m.is_undefined(RateName::Precision));
        assert!(m.is_undefined(RateName::Recall));
    }

    #[test]
    fn metrics_omitted_without_actuals() {
        let s = store_with(fixtures::table5_transactions(), &[Funding; 8], &[None; 8]);
        let v = s.filter_by_classification(Funding, None);
        assert_eq!(v.records.unlabeled.len(), 8);
        assert!(v.metrics.is_none());
        assert!(matches!(
            s.visualization_data(Funding, FeatureGroup::Amount),
            Err(EvidenceError::MissingActual(_))
        ));
    }

    #[test]
    fn visualization_skips_unlabeled_records() {
        let mut actuals = [Some(Funding); 8];
        actuals[2] = None;
        actuals[5] = None;
        let s = store_with(fixtures::table5_transactions(), &[Funding; 8], &actuals);
        let pts = s.visualization_data(Funding, FeatureGroup::Amount).unwrap();
        assert_eq!(pts.len(), 6);
        assert!(pts.iter().all(|p| p.outcome == Outcome::TruePositive));
    }

    fn table4_store() -> EvidenceStore {
        let batch = parse_raw_csv(fixtures::TABLE_4_CSV.as_bytes()).unwrap();
        let txs: Vec<EnrichedTransaction> = batch
            .records
            .into_iter()
            .map(|r| EnrichedTransaction::bare(r.transaction))
            .collect();
        let n = txs.len();
        store_with(txs, &vec![Other; n], &vec![Some(Other); n])
    }

    #[test]
    fn table4_search() {
        let s = table4_store();
        let hits = s.search("credit", MatchMode::Contains).unwrap();
        let mut found: Vec<u64> = hits.correct.iter().map(|r| r.tx.customer_id).collect();
        found.sort();
        assert_eq!(found, [2, 3]);

        let exact = s.search("EFTPOS TRANSACTION", MatchMode::Exact).unwrap();
        assert_eq!(exact.len(), 1);
        assert_eq!(exact.correct[0].tx.customer_id, 1);
        assert!(s.search("eftpos", MatchMode::Exact).unwrap().is_empty());
        assert!(matches!(
            s.search("  ", MatchMode::Contains),
            Err(EvidenceError::EmptyTerm)
        ));
    }

    #[test]
    fn exact_is_subset_of_contains() {
        let s = table4_store();
        for r in s.records() {
            let term = r.tx.raw.description.clone();
            let exact = s.search(&term, MatchMode::Exact).unwrap().shas();
            let contains = s.search(&term, MatchMode::Contains).unwrap().shas();
            assert!(exact.iter().all(|x| contains.contains(x)));
            assert!(exact.contains(&r.sha()));
        }
    }

    #[test]
    fn table5_amount_neighbors() {
        let s = store_with(
            fixtures::table5_transactions(),
            &[Funding; 8],
            &[Some(Funding); 8],
        );
        let n = s
            .neighbors("T5_01", &[FeatureGroup::Amount], 10, Execution::Sequential)
            .unwrap();
        let order: Vec<&str> = n.iter().map(|x| x.record.sha()).collect();
        assert_eq!(
            order,
            ["T5_02", "T5_08", "T5_06", "T5_05", "T5_07", "T5_03", "T5_04"]
        );
        assert!(n.windows(2).all(|w| w[0].distance <= w[1].distance));

        let top = s
            .neighbors("T5_01", &[FeatureGroup::Amount], 1, Execution::Parallel)
            .unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].record.sha(), "T5_02");
    }

    #[test]
    fn duplicate_vector_is_nearest_at_zero() {
        let mut txs = fixtures::table5_transactions();
        let mut dup = txs[3].clone();
        dup.raw.sha = "T5_99".into();
        txs.push(dup);
        let s = store_with(txs, &[Funding; 9], &[Some(Funding); 9]);
        let n = s.neighbors("T5_04", &[], 1, Execution::Sequential).unwrap();
        assert_eq!(n[0].record.sha(), "T5_99");
        assert_eq!(n[0].distance, 0.0);
        assert!(matches!(
            s.neighbors("nope", &[], 1, Execution::Sequential),
            Err(EvidenceError::UnknownSha(_))
        ));
        assert!(matches!(
            s.neighbors("T5_04", &[], 0, Execution::Sequential),
            Err(EvidenceError::InvalidK)
        ));
    }

    #[test]
    fn neighbor_distance_is_symmetric() {
        let s = store_with(
            fixtures::table5_transactions(),
            &[Funding; 8],
            &[Some(Funding); 8],
        );
        let groups = [FeatureGroup::Text, FeatureGroup::Year];
        for a in s.records() {
            for nb in s.neighbors(a.sha(), &groups, 10, Execution::Sequential).unwrap() {
                let back = s
                    .neighbors(nb.record.sha(), &groups, 10, Execution::Sequential)
                    .unwrap();
                let d = back.iter().find(|x| x.record.sha() == a.sha()).unwrap().distance;
                assert_eq!(d, nb.distance);
            }
        }
    }

    #[test]
    fn reference_funding_visualization() {
        let s = reference_store();
        let pts = s.visualization_data(Funding, FeatureGroup::Amount).unwrap();
        assert_eq!(pts.len(), 9);
        let of = |o: Outcome| -> Vec<usize> {
            let shas: Vec<&str> = pts
                .iter()
                .filter(|p| p.outcome == o)
                .map(|p| p.sha.as_str())
                .collect();
            row_numbers(&shas)
        };
        assert_eq!(of(Outcome::FalseNegative), [7]);
        assert_eq!(of(Outcome::TruePositive), [2, 3, 6]);
        assert!(of(Outcome::FalsePositive).is_empty());
        assert_eq!(of(Outcome::TrueNegative).len(), 5);
        assert!(pts.iter().all(|p| (0.0..=1.0).contains(&p.x)));

        let text = s.visualization_data(Funding, FeatureGroup::Text).unwrap();
        assert!(text.iter().all(|p| (p.x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn outcomes_partition_for_every_focus() {
        let s = reference_store();
        for c in ClassLabel::ALL {
            let pts = s.visualization_data(c, FeatureGroup::Day).unwrap();
            assert_eq!(pts.len(), s.len());
        }
        let all_correct = store_with(
            fixtures::table5_transactions(),
            &[
                Funding, Funding, Other, Other, IncomeCash, IncomeCash, Funding, Other,
            ],
            &[
                Some(Funding),
                Some(Funding),
                Some(Other),
                Some(Other),
                Some(IncomeCash),
                Some(IncomeCash),
                Some(Funding),
                Some(Other),
            ],
        );
        let pts = all_correct
            .visualization_data(Funding, FeatureGroup::Amount)
            .unwrap();
        assert!(pts
            .iter()
            .all(|p| matches!(p.outcome, Outcome::TruePositive | Outcome::TrueNegative)));
    }

    fn rev<T>(mut v: Vec<T>) -> Vec<T> {
        v.reverse();
        v
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let f = fixtures::reference_fixture();
        let a = EvidenceStore::load_join(
            f.transactions.clone(),
            f.features.clone(),
            f.predictions.clone(),
            f.actuals.clone(),
        )
        .unwrap();
        let b = EvidenceStore::load_join(
            rev(f.transactions),
            rev(f.features),
            rev(f.predictions),
            rev(f.actuals),
        )
        .unwrap();
        assert_eq!(a.records(), b.records());
        assert_eq!(
            a.search("deposit", MatchMode::Contains).unwrap(),
            b.search("deposit", MatchMode::Contains).unwrap()
        );
    }

    #[test]
    fn jsonl_round_trip() {
        let s = reference_store();
        let mut buf = Vec::new();
        s.write_jsonl(&mut buf).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 9);
        let back = EvidenceStore::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.records(), s.records());
        assert_eq!(back.report(), s.report());
        assert!(matches!(
            EvidenceStore::read_jsonl("{}\n".as_bytes()),
            Err(EvidenceError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn repredict_swaps_model_id() {
        let f = fixtures::reference_fixture();
        let s = reference_store();
        assert!(!s.is_stale(f.model.model_id()));
        let fresh = s.repredict(&f.model, Execution::Parallel).unwrap();
        assert_eq!(fresh.model_id(), Some(f.model.model_id()));
        assert_eq!(fresh.len(), 9);
        assert!(s.is_stale("pnn-other"));
        for (a, b) in fresh.records().iter().zip(s.records()) {
            assert_eq!(a.actual, b.actual);
        }
    }
}
