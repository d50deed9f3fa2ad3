//! The batch pipeline: ingest into the corpus, then featurize, train and
//! evaluate. Each stage reads and writes plain files in one directory, so the
//! CLI can run them one at a time and [`run_pipeline`] can run them all in a
//! staging directory that only replaces the live artifacts on success.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use evidence_core::evidence::EvidenceStore;
use evidence_core::explain::{permutation_importance, ImportanceMetric, ImportanceReport};
use evidence_core::featurize::{build_all, fit_schema, FeatureSchema, FeatureVector};
use evidence_core::ingest::{
    enrich_all, generate_synthetic, parse_application, parse_raw_csv, ContextTransaction,
    EnrichedTransaction, EnrichmentProvider, IngestWarning, LabeledTransaction, MockProvider, ShaLedger,
    SyntheticConfig,
};
use evidence_core::metrics::EvaluationReport;
use evidence_core::pnn::{PnnModel, PriorMode, SigmaSearch, DEFAULT_SIGMA, SIGMA_GRID};
use evidence_core::split::stratified_split;
use evidence_core::ClassLabel;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, SplitDoc};
use crate::config::ServiceConfig;
use crate::error::{ServiceError, Stage};

const STAGING_DIR: &str = ".staging";
/// Fraction of the training split held out for the sigma search.
const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub accepted: Vec<String>,
    pub duplicates: Vec<String>,
    pub labeled: usize,
    pub warnings: Vec<IngestWarning>,
}

/// Uploaded transactions with the label each row carried, if any.
pub type UploadRows = Vec<(ContextTransaction, Option<ClassLabel>)>;

/// Parses an upload: an application document when it starts with `{`,
/// otherwise a CSV export.
pub fn parse_upload(bytes: &[u8]) -> Result<(UploadRows, Vec<IngestWarning>), ServiceError> {
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    if first == Some(&b'{') {
        let app = parse_application(bytes)?;
        Ok((
            app.transactions_with_context()
                .into_iter()
                .map(|t| (t, None))
                .collect(),
            Vec::new(),
        ))
    } else {
        let batch = parse_raw_csv(bytes)?;
        Ok((
            batch
                .records
                .into_iter()
                .map(|r| (r.transaction, r.label))
                .collect(),
            batch.warnings,
        ))
    }
}

/// Mock providers configured for `dir`: the knowledge file when present.
fn providers(dir: &Path) -> Result<Vec<MockProvider>, ServiceError> {
    let p = artifacts::path(dir, artifacts::KNOWLEDGE);
    if p.is_file() {
        Ok(vec![MockProvider::from_file(&p)?])
    } else {
        Ok(Vec::new())
    }
}

fn context_of(tx: &EnrichedTransaction) -> ContextTransaction {
    ContextTransaction {
        customer_id: tx.customer_id,
        bank: tx.bank.clone(),
        industry: tx.industry.clone(),
        tx: tx.raw.clone(),
    }
}

/// Admits a batch into the corpus of `dir`. Identical re-submissions are
/// reported as duplicates; a sha already stored with other content rejects
/// the whole batch. Returns the summary and the newly stored transactions.
pub fn admit(
    dir: &Path,
    batch: Vec<(ContextTransaction, Option<ClassLabel>)>,
    mut warnings: Vec<IngestWarning>,
) -> Result<(IngestSummary, Vec<LabeledTransaction>), ServiceError> {
    let mut corpus = artifacts::read_corpus(dir)?;
    let mut ledger = ShaLedger::new();
    let existing: Vec<ContextTransaction> = corpus.iter().map(|l| context_of(&l.transaction)).collect();
    ledger
        .admit(&existing)
        .map_err(|e| ServiceError::artifact(&artifacts::path(dir, artifacts::CORPUS), e))?;

    let contexts: Vec<ContextTransaction> = batch.iter().map(|(t, _)| t.clone()).collect();
    let outcome = ledger.admit(&contexts)?;

    // The ledger accepts each sha once; keep the first occurrence of each.
    let mut fresh: std::collections::HashSet<&str> = outcome.accepted.iter().map(String::as_str).collect();
    let mut accepted_ctx = Vec::new();
    let mut labels = Vec::new();
    for (tx, label) in batch {
        if fresh.remove(tx.tx.sha.as_str()) {
            labels.push(label);
            accepted_ctx.push(tx);
        }
    }

    let owned = providers(dir)?;
    let refs: Vec<&dyn EnrichmentProvider> = owned.iter().map(|p| p as &dyn EnrichmentProvider).collect();
    let (enriched, enrich_warnings) = enrich_all(accepted_ctx, &refs);
    warnings.extend(enrich_warnings);

    let added: Vec<LabeledTransaction> = enriched
        .into_iter()
        .zip(labels)
        .map(|(transaction, label)| LabeledTransaction { transaction, label })
        .collect();
    if !added.is_empty() {
        corpus.extend(added.iter().cloned());
        artifacts::write_corpus(dir, &corpus)?;
    }
    let summary = IngestSummary {
        labeled: added.iter().filter(|t| t.label.is_some()).count(),
        accepted: outcome.accepted,
        duplicates: outcome.duplicates,
        warnings,
    };
    Ok((summary, added))
}

pub fn ingest_bytes(
    dir: &Path,
    bytes: &[u8],
) -> Result<(IngestSummary, Vec<LabeledTransaction>), ServiceError> {
    let (batch, warnings) = parse_upload(bytes)?;
    admit(dir, batch, warnings)
}

/// Generates a labeled synthetic corpus and admits it.
pub fn ingest_synthetic(dir: &Path, config: &SyntheticConfig) -> Result<IngestSummary, ServiceError> {
    let generated = generate_synthetic(config)?;
    let batch = generated
        .iter()
        .map(|l| (context_of(&l.transaction), l.label))
        .collect();
    admit(dir, batch, Vec::new()).map(|(s, _)| s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeSummary {
    pub schema_version: u64,
    pub dimension: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_unlabeled: usize,
}

/// Splits the labeled corpus, fits the schema on the training side and
/// featurizes every transaction. A refit whose content matches the previous
/// schema keeps its version, so unchanged inputs give unchanged artifacts.
pub fn featurize(dir: &Path, config: &ServiceConfig) -> Result<FeaturizeSummary, ServiceError> {
    let corpus = artifacts::read_corpus(dir)?;
    if corpus.is_empty() {
        return Err(ServiceError::Conflict(
            "the corpus is empty; ingest or generate transactions first".into(),
        ));
    }
    let labeled: Vec<&LabeledTransaction> = corpus.iter().filter(|l| l.label.is_some()).collect();
    if labeled.is_empty() {
        return Err(ServiceError::Conflict(
            "the corpus has no labeled transactions".into(),
        ));
    }
    let labels: Vec<ClassLabel> = labeled.iter().map(|l| l.label.expect("labeled")).collect();
    let split = stratified_split(&labels, config.test_fraction, config.seed);
    let sha_of = |i: &usize| labeled[*i].transaction.sha().to_string();
    let doc = SplitDoc {
        seed: config.seed,
        test_fraction: config.test_fraction,
        train: split.train.iter().map(sha_of).collect(),
        test: split.test.iter().map(sha_of).collect(),
    };

    let train_txs: Vec<EnrichedTransaction> = split
        .train
        .iter()
        .map(|&i| labeled[i].transaction.clone())
        .collect();
    let previous = if artifacts::exists(dir, artifacts::SCHEMA) {
        Some(artifacts::read_schema(dir)?)
    } else {
        None
    };
    let mut schema = fit_schema(&train_txs, config.text_dim, previous.as_ref())
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    if let Some(prev) = &previous {
        if same_content(prev, &schema) {
            schema.version = prev.version;
        }
    }

    let all: Vec<EnrichedTransaction> = corpus.iter().map(|l| l.transaction.clone()).collect();
    let features = build_all(&all, &schema, config.exec);
    artifacts::write_schema(dir, &schema)?;
    artifacts::write_features(dir, &features)?;
    artifacts::write_json(dir, artifacts::SPLIT, &doc)?;
    Ok(FeaturizeSummary {
        schema_version: schema.version,
        dimension: schema.dimension(),
        n_train: doc.train.len(),
        n_test: doc.test.len(),
        n_unlabeled: corpus.len() - labeled.len(),
    })
}

fn same_content(a: &FeatureSchema, b: &FeatureSchema) -> bool {
    let mut b = b.clone();
    b.version = a.version;
    *a == b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub model_id: String,
    pub schema_version: u64,
    pub sigma: f64,
    /// Present when sigma was chosen by search rather than fixed.
    pub sigma_search: Option<SigmaSearch>,
    pub prior_mode: PriorMode,
    pub n_train: usize,
}

/// Everything the later stages need from the featurize outputs.
struct Inputs {
    schema: FeatureSchema,
    corpus: Vec<LabeledTransaction>,
    features: Vec<FeatureVector>,
    split: SplitDoc,
    by_sha: HashMap<String, usize>,
}

impl Inputs {
    fn load(dir: &Path) -> Result<Inputs, ServiceError> {
        let schema = artifacts::read_schema(dir)?;
        let corpus = artifacts::read_corpus(dir)?;
        let features = artifacts::read_features(dir, &schema)?;
        let split: SplitDoc = artifacts::read_json(dir, artifacts::SPLIT)?;
        if features.len() != corpus.len()
            || features
                .iter()
                .zip(&corpus)
                .any(|(f, t)| f.sha != t.transaction.sha())
        {
            return Err(ServiceError::Conflict(
                "features are out of date with the corpus; run featurize".into(),
            ));
        }
        let by_sha = corpus
            .iter()
            .enumerate()
            .map(|(i, t)| (t.transaction.sha().to_string(), i))
            .collect();
        Ok(Inputs {
            schema,
            corpus,
            features,
            split,
            by_sha,
        })
    }

    fn labeled_rows(&self, shas: &[String]) -> Result<Vec<(&FeatureVector, ClassLabel)>, ServiceError> {
        shas.iter()
            .map(|sha| {
                let i = *self
                    .by_sha
                    .get(sha)
                    .ok_or_else(|| ServiceError::Conflict(format!("split names unknown sha {sha}")))?;
                let label = self.corpus[i]
                    .label
                    .ok_or_else(|| ServiceError::Conflict(format!("split names unlabeled sha {sha}")))?;
                Ok((&self.features[i], label))
            })
            .collect()
    }
}

/// Trains on the training split. Without a fixed sigma the default grid is
/// searched on a validation slice of the training split.
pub fn train(dir: &Path, config: &ServiceConfig) -> Result<TrainingSummary, ServiceError> {
    let inputs = Inputs::load(dir)?;
    let rows = inputs.labeled_rows(&inputs.split.train)?;
    let search = match config.sigma {
        Some(_) => None,
        None => search_sigma(&rows, config)?,
    };
    let sigma = config
        .sigma
        .or(search.as_ref().map(|s| s.best_sigma))
        .unwrap_or(DEFAULT_SIGMA);
    let model = PnnModel::train(&rows, sigma, config.prior_mode)
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let summary = TrainingSummary {
        model_id: model.model_id().to_string(),
        schema_version: model.schema_version(),
        sigma,
        sigma_search: search,
        prior_mode: config.prior_mode,
        n_train: rows.len(),
    };
    artifacts::write_model(dir, &model)?;
    artifacts::write_json(dir, artifacts::TRAINING, &summary)?;
    Ok(summary)
}

/// `None` when the training split is too small to hold out a validation
/// slice covering every class.
fn search_sigma(
    rows: &[(&FeatureVector, ClassLabel)],
    config: &ServiceConfig,
) -> Result<Option<SigmaSearch>, ServiceError> {
    let labels: Vec<ClassLabel> = rows.iter().map(|(_, c)| *c).collect();
    let inner = stratified_split(&labels, VALIDATION_FRACTION, config.seed.wrapping_add(1));
    let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i]).collect::<Vec<_>>();
    let (fit, validation) = (pick(&inner.train), pick(&inner.test));
    let covered = ClassLabel::ALL.iter().all(|c| fit.iter().any(|(_, l)| l == c));
    if validation.is_empty() || !covered {
        return Ok(None);
    }
    PnnModel::select_sigma(&fit, &validation, &SIGMA_GRID, config.prior_mode, config.exec)
        .map(Some)
        .map_err(|e| ServiceError::BadRequest(e.to_string()))
}

/// Summary of a pipeline run, persisted as the report artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub model_id: String,
    pub schema_version: u64,
    pub sigma: f64,
    pub sigma_search: Option<SigmaSearch>,
    pub prior_mode: PriorMode,
    pub seed: u64,
    pub test_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_unlabeled: usize,
    /// Metrics over the test split; `None` when the split is empty.
    pub evaluation: Option<EvaluationReport>,
}

/// Predicts the test split and every unlabeled transaction, and loads them
/// into the evidence store. Training rows are left out of the store so its
/// metrics are held-out metrics.
pub fn evaluate(dir: &Path, config: &ServiceConfig) -> Result<PipelineReport, ServiceError> {
    let inputs = Inputs::load(dir)?;
    let model = artifacts::read_model(dir)?;
    if model.schema_version() != inputs.schema.version {
        return Err(ServiceError::Conflict(format!(
            "model was trained on schema version {} but the features use version {}; run train",
            model.schema_version(),
            inputs.schema.version
        )));
    }
    let training: Option<TrainingSummary> = artifacts::read_json_opt(dir, artifacts::TRAINING)?;
    let (sigma_search, prior_mode) = match training.filter(|t| t.model_id == model.model_id()) {
        Some(t) => (t.sigma_search, t.prior_mode),
        None => (None, config.prior_mode),
    };

    let in_train: std::collections::HashSet<&str> = inputs.split.train.iter().map(String::as_str).collect();
    let members: Vec<usize> = (0..inputs.corpus.len())
        .filter(|&i| !in_train.contains(inputs.corpus[i].transaction.sha()))
        .collect();
    let features: Vec<FeatureVector> = members.iter().map(|&i| inputs.features[i].clone()).collect();
    let predictions = model
        .predict_batch(&features, config.exec)
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    let transactions = members
        .iter()
        .map(|&i| inputs.corpus[i].transaction.clone())
        .collect();
    let actuals = members
        .iter()
        .filter_map(|&i| {
            let t = &inputs.corpus[i];
            t.label.map(|l| (t.transaction.sha().to_string(), l))
        })
        .collect();
    let store = EvidenceStore::load_join(transactions, features, predictions, actuals)?;

    let n_test = inputs.split.test.len();
    let report = PipelineReport {
        model_id: model.model_id().to_string(),
        schema_version: model.schema_version(),
        sigma: model.sigma(),
        sigma_search,
        prior_mode,
        seed: inputs.split.seed,
        test_fraction: inputs.split.test_fraction,
        n_train: inputs.split.train.len(),
        n_test,
        n_unlabeled: store.len() - n_test,
        evaluation: store.report().cloned(),
    };
    artifacts::write_evidence(dir, &store)?;
    artifacts::write_json(dir, artifacts::REPORT, &report)?;
    Ok(report)
}

/// Permutation importance over the labeled records of the evidence store.
pub fn importance(
    dir: &Path,
    config: &ServiceConfig,
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport, ServiceError> {
    let model = artifacts::read_model(dir)?;
    let store = artifacts::read_evidence(dir)?;
    let report = importance_over(&model, &store, metric, repeats, seed, config)?;
    artifacts::write_json(dir, artifacts::IMPORTANCE, &report)?;
    Ok(report)
}

pub fn importance_over(
    model: &PnnModel,
    store: &EvidenceStore,
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
    config: &ServiceConfig,
) -> Result<ImportanceReport, ServiceError> {
    let rows: Vec<_> = store
        .records()
        .iter()
        .filter_map(|r| r.actual.map(|a| (&r.features, a)))
        .collect();
    Ok(permutation_importance(
        model,
        &rows,
        metric,
        repeats,
        seed,
        config.exec,
    )?)
}

/// Runs featurize, train and evaluate in a staging directory seeded with the
/// corpus, then moves the artifacts into the data directory. On failure the
/// staging directory is removed and the live artifacts are untouched.
pub fn run_pipeline(config: &ServiceConfig) -> Result<PipelineReport, ServiceError> {
    let dir = &config.data_dir;
    fs::create_dir_all(dir).map_err(|e| ServiceError::io(dir, e))?;
    let staging = dir.join(STAGING_DIR);
    let result = stage_and_run(dir, &staging, config);
    let _ = fs::remove_dir_all(&staging);
    result
}

fn stage_and_run(
    dir: &Path,
    staging: &PathBuf,
    config: &ServiceConfig,
) -> Result<PipelineReport, ServiceError> {
    if staging.exists() {
        fs::remove_dir_all(staging).map_err(|e| ServiceError::io(staging, e))?;
    }
    fs::create_dir_all(staging).map_err(|e| ServiceError::io(staging, e))?;
    for name in [artifacts::CORPUS, artifacts::SCHEMA] {
        if artifacts::exists(dir, name) {
            let from = dir.join(name);
            fs::copy(&from, staging.join(name)).map_err(|e| ServiceError::io(&from, e))?;
        }
    }
    featurize(staging, config).map_err(|e| e.in_stage(Stage::Featurize))?;
    train(staging, config).map_err(|e| e.in_stage(Stage::Train))?;
    let report = evaluate(staging, config).map_err(|e| e.in_stage(Stage::Evaluate))?;

    let stale = artifacts::path(dir, artifacts::IMPORTANCE);
    if stale.is_file() {
        fs::remove_file(&stale).map_err(|e| ServiceError::io(&stale, e))?;
    }
    for name in artifacts::PIPELINE_OUTPUTS {
        let to = dir.join(name);
        fs::rename(staging.join(name), &to).map_err(|e| ServiceError::io(&to, e))?;
    }
    Ok(report)
}
