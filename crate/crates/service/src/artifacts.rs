//! Plain-file persistence under the data directory. Every write goes to a
//! temporary sibling first and is renamed into place.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use evidence_core::evidence::EvidenceStore;
use evidence_core::featurize::{read_feature_store, write_feature_store, FeatureSchema, FeatureVector};
use evidence_core::ingest::LabeledTransaction;
use evidence_core::pnn::PnnModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const CORPUS: &str = "transactions.jsonl";
pub const KNOWLEDGE: &str = "knowledge.json";
pub const SCHEMA: &str = "schema.json";
pub const FEATURES: &str = "features.jsonl";
pub const SPLIT: &str = "split.json";
pub const MODEL: &str = "model.json";
pub const TRAINING: &str = "training.json";
pub const EVIDENCE: &str = "evidence.jsonl";
pub const REPORT: &str = "report.json";
pub const IMPORTANCE: &str = "importance.json";

/// Artifacts written by a full pipeline run, in stage order.
pub const PIPELINE_OUTPUTS: [&str; 7] = [SCHEMA, FEATURES, SPLIT, MODEL, TRAINING, EVIDENCE, REPORT];

/// Train/test assignment of the labeled corpus, by sha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDoc {
    pub seed: u64,
    pub test_fraction: f64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn exists(dir: &Path, name: &str) -> bool {
    dir.join(name).is_file()
}

/// Writes through `fill` into `<name>.tmp`, then renames over `name`.
pub fn write_with<F>(dir: &Path, name: &str, fill: F) -> Result<(), ServiceError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), ServiceError>,
{
    let target = dir.join(name);
    let tmp = dir.join(format!("{name}.tmp"));
    let result = File::create(&tmp)
        .map_err(|e| ServiceError::io(&tmp, e))
        .and_then(|f| {
            let mut w = BufWriter::new(f);
            fill(&mut w)?;
            w.flush().map_err(|e| ServiceError::io(&tmp, e))
        })
        .and_then(|()| fs::rename(&tmp, &target).map_err(|e| ServiceError::io(&target, e)));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), ServiceError> {
    let target = dir.join(name);
    write_with(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| ServiceError::artifact(&target, e))?;
        w.write_all(b"\n").map_err(|e| ServiceError::io(&target, e))
    })
}

pub fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T, ServiceError> {
    let p = dir.join(name);
    let bytes = fs::read(&p).map_err(|e| ServiceError::io(&p, e))?;
    serde_json::from_slice(&bytes).map_err(|e| ServiceError::artifact(&p, e))
}

pub fn read_json_opt<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Option<T>, ServiceError> {
    if exists(dir, name) {
        read_json(dir, name).map(Some)
    } else {
        Ok(None)
    }
}

/// The ingested corpus in admission order; empty when nothing was ingested.
pub fn read_corpus(dir: &Path) -> Result<Vec<LabeledTransaction>, ServiceError> {
    let p = dir.join(CORPUS);
    if !p.is_file() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(&p).map_err(|e| ServiceError::io(&p, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ServiceError::io(&p, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| ServiceError::artifact(&p, format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_corpus(dir: &Path, corpus: &[LabeledTransaction]) -> Result<(), ServiceError> {
    let target = dir.join(CORPUS);
    write_with(dir, CORPUS, |w| {
        for tx in corpus {
            serde_json::to_writer(&mut *w, tx).map_err(|e| ServiceError::artifact(&target, e))?;
            w.write_all(b"\n").map_err(|e| ServiceError::io(&target, e))?;
        }
        Ok(())
    })
}

pub fn read_schema(dir: &Path) -> Result<FeatureSchema, ServiceError> {
    let p = dir.join(SCHEMA);
    let bytes = fs::read(&p).map_err(|e| ServiceError::io(&p, e))?;
    FeatureSchema::from_json(&bytes).map_err(|e| ServiceError::artifact(&p, e))
}

pub fn write_schema(dir: &Path, schema: &FeatureSchema) -> Result<(), ServiceError> {
    let target = dir.join(SCHEMA);
    write_with(dir, SCHEMA, |w| {
        w.write_all(schema.to_json().as_bytes())
            .map_err(|e| ServiceError::io(&target, e))
    })
}

pub fn read_features(dir: &Path, schema: &FeatureSchema) -> Result<Vec<FeatureVector>, ServiceError> {
    let p = dir.join(FEATURES);
    let reader = BufReader::new(File::open(&p).map_err(|e| ServiceError::io(&p, e))?);
    read_feature_store(reader, schema).map_err(|e| ServiceError::artifact(&p, e))
}

pub fn write_features(dir: &Path, features: &[FeatureVector]) -> Result<(), ServiceError> {
    let target = dir.join(FEATURES);
    write_with(dir, FEATURES, |w| {
        write_feature_store(&mut *w, features).map_err(|e| ServiceError::artifact(&target, e))
    })
}

pub fn read_model(dir: &Path) -> Result<PnnModel, ServiceError> {
    let p = dir.join(MODEL);
    let bytes = fs::read(&p).map_err(|e| ServiceError::io(&p, e))?;
    PnnModel::from_json(&bytes).map_err(|e| ServiceError::artifact(&p, e))
}

pub fn write_model(dir: &Path, model: &PnnModel) -> Result<(), ServiceError> {
    let target = dir.join(MODEL);
    write_with(dir, MODEL, |w| {
        w.write_all(model.to_json().as_bytes())
            .map_err(|e| ServiceError::io(&target, e))
    })
}

pub fn read_evidence(dir: &Path) -> Result<EvidenceStore, ServiceError> {
    let p = dir.join(EVIDENCE);
    let reader = BufReader::new(File::open(&p).map_err(|e| ServiceError::io(&p, e))?);
    EvidenceStore::read_jsonl(reader).map_err(|e| ServiceError::artifact(&p, e))
}

pub fn write_evidence(dir: &Path, store: &EvidenceStore) -> Result<(), ServiceError> {
    let target = dir.join(EVIDENCE);
    write_with(dir, EVIDENCE, |w| {
        store
            .write_jsonl(&mut *w)
            .map_err(|e| ServiceError::artifact(&target, e))
    })
}
