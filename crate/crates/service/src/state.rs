//! Session state: an immutable [`Snapshot`] of schema, model and evidence
//! store behind an atomically swapped pointer, plus the single-writer gate
//! that serializes ingests and retrains.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use evidence_core::evidence::{EvidenceRecord, EvidenceStore};
use evidence_core::explain::{ImportanceMetric, ImportanceReport};
use evidence_core::featurize::{build_all, FeatureSchema};
use evidence_core::ingest::LabeledTransaction;
use evidence_core::pnn::{PnnModel, Prediction};
use evidence_core::Execution;

use crate::artifacts;
use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::pipeline::{importance_over, PipelineReport};

type ImportanceKey = (ImportanceMetric, usize, u64);

/// A consistent schema/model/store triple. Never mutated after construction
/// apart from the memoized importance reports.
#[derive(Debug)]
pub struct Snapshot {
    pub schema: FeatureSchema,
    pub model: PnnModel,
    pub store: EvidenceStore,
    pub report: Option<PipelineReport>,
    importance: Mutex<BTreeMap<ImportanceKey, Arc<ImportanceReport>>>,
}

impl Snapshot {
    /// Checks that the parts agree on the schema version and re-predicts a
    /// store whose cached predictions came from another model.
    pub fn new(
        schema: FeatureSchema,
        model: PnnModel,
        store: EvidenceStore,
        exec: Execution,
    ) -> Result<Snapshot, ServiceError> {
        if model.schema_version() != schema.version {
            return Err(ServiceError::Conflict(format!(
                "model expects schema version {} but schema is version {}",
                model.schema_version(),
                schema.version
            )));
        }
        if let Some(r) = store
            .records()
            .iter()
            .find(|r| r.features.schema_version != schema.version)
        {
            return Err(ServiceError::Conflict(format!(
                "evidence record {} has schema version {}, expected {}",
                r.sha(),
                r.features.schema_version,
                schema.version
            )));
        }
        let store = if store.is_stale(model.model_id()) {
            tracing::info!(model_id = model.model_id(), "re-predicting stale evidence store");
            store.repredict(&model, exec)?
        } else {
            store
        };
        Ok(Snapshot {
            schema,
            model,
            store,
            report: None,
            importance: Mutex::default(),
        })
    }

    pub fn with_report(mut self, report: PipelineReport) -> Self {
        self.report = Some(report);
        self
    }

    /// Loads the artifacts in `dir`; `None` when no model has been trained.
    pub fn load(dir: &Path, exec: Execution) -> Result<Option<Snapshot>, ServiceError> {
        if !artifacts::exists(dir, artifacts::MODEL) {
            return Ok(None);
        }
        let schema = artifacts::read_schema(dir)?;
        let model = artifacts::read_model(dir)?;
        let store = if artifacts::exists(dir, artifacts::EVIDENCE) {
            artifacts::read_evidence(dir)?
        } else {
            EvidenceStore::default()
        };
        let stale = store.is_stale(model.model_id());
        let mut snapshot = Snapshot::new(schema, model, store, exec)?;
        if stale {
            artifacts::write_evidence(dir, &snapshot.store)?;
        }
        let report: Option<PipelineReport> = artifacts::read_json_opt(dir, artifacts::REPORT)?;
        snapshot.report = report.filter(|r| r.model_id == snapshot.model_id());
        let cached: Option<ImportanceReport> = artifacts::read_json_opt(dir, artifacts::IMPORTANCE)?;
        if let Some(rep) = cached.filter(|r| r.model_id == snapshot.model_id()) {
            let repeats = rep.groups.first().map_or(0, |g| g.repeats);
            let key = (rep.metric, repeats, rep.seed);
            snapshot
                .importance
                .lock()
                .expect("cache lock")
                .insert(key, Arc::new(rep));
        }
        Ok(Some(snapshot))
    }

    pub fn model_id(&self) -> &str {
        self.model.model_id()
    }

    pub fn schema_version(&self) -> u64 {
        self.schema.version
    }

    /// Permutation importance over the labeled store records, memoized per
    /// (metric, repeats, seed).
    pub fn importance(
        &self,
        metric: ImportanceMetric,
        repeats: usize,
        seed: u64,
        config: &ServiceConfig,
    ) -> Result<Arc<ImportanceReport>, ServiceError> {
        let key = (metric, repeats, seed);
        if let Some(hit) = self.importance.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let report = Arc::new(importance_over(
            &self.model,
            &self.store,
            metric,
            repeats,
            seed,
            config,
        )?);
        self.importance
            .lock()
            .expect("cache lock")
            .insert(key, report.clone());
        Ok(report)
    }

    /// Featurizes and predicts transactions under this snapshot without
    /// touching the store.
    pub fn classify(
        &self,
        transactions: &[evidence_core::ingest::EnrichedTransaction],
        exec: Execution,
    ) -> Result<Vec<Prediction>, ServiceError> {
        let features = build_all(transactions, &self.schema, exec);
        self.model
            .predict_batch(&features, exec)
            .map_err(|e| ServiceError::Internal(e.to_string()))
    }

    /// A new snapshot whose store also holds `added`, classified by this
    /// snapshot's model. The importance cache is not carried over.
    pub fn extended(&self, added: &[LabeledTransaction], exec: Execution) -> Result<Snapshot, ServiceError> {
        let txs: Vec<_> = added.iter().map(|l| l.transaction.clone()).collect();
        let features = build_all(&txs, &self.schema, exec);
        let predictions = self
            .model
            .predict_batch(&features, exec)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let mut records: Vec<EvidenceRecord> = self.store.records().to_vec();
        for ((l, features), prediction) in added.iter().zip(features).zip(predictions) {
            records.push(EvidenceRecord {
                tx: l.transaction.clone(),
                features,
                prediction,
                actual: l.label,
            });
        }
        Ok(Snapshot {
            schema: self.schema.clone(),
            model: self.model.clone(),
            store: EvidenceStore::from_records(records)?,
            report: self.report.clone(),
            importance: Mutex::default(),
        })
    }
}

/// Shared by every request handler. Readers clone the current snapshot
/// pointer; writers hold the gate for the whole read-modify-swap.
#[derive(Debug)]
pub struct SessionState {
    pub config: ServiceConfig,
    current: RwLock<Option<Arc<Snapshot>>>,
    writer: tokio::sync::Mutex<()>,
}

impl SessionState {
    pub fn new(config: ServiceConfig, snapshot: Option<Snapshot>) -> SessionState {
        SessionState {
            config,
            current: RwLock::new(snapshot.map(Arc::new)),
            writer: tokio::sync::Mutex::new(()),
        }
    }

    /// Loads whatever artifacts exist under the configured data directory.
    pub fn load(config: ServiceConfig) -> Result<SessionState, ServiceError> {
        std::fs::create_dir_all(&config.data_dir).map_err(|e| ServiceError::io(&config.data_dir, e))?;
        let snapshot = Snapshot::load(&config.data_dir, config.exec)?;
        Ok(SessionState::new(config, snapshot))
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.current.read().expect("snapshot lock").clone()
    }

    pub fn swap(&self, snapshot: Snapshot) -> Arc<Snapshot> {
        let next = Arc::new(snapshot);
        *self.current.write().expect("snapshot lock") = Some(next.clone());
        next
    }

    pub async fn write_gate(&self) -> tokio::sync::MutexGuard<'_, ()> {
        self.writer.lock().await
    }
}
