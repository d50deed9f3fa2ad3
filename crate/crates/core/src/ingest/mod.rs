//! Ingestion of raw business documents.
//!
//! Two wire formats are accepted: the nested application document (one
//! application, several bank accounts, each with its transactions) and a flat
//! CSV export with one transaction per row. Both are normalised into
//! [`ContextTransaction`]s, optionally enriched by pluggable providers, and
//! admitted through a [`ShaLedger`] that enforces sha uniqueness across
//! batches.

mod application;
mod csv_export;
mod enrich;
mod ledger;
mod synthetic;
pub mod timestamp;

pub use application::{parse_application, RawAccount, RawApplication};
pub use csv_export::{parse_raw_csv, CsvBatch, CsvRecord, CSV_HEADERS};
pub use enrich::{
    enrich, enrich_all, EnrichedTransaction, Enrichment, EnrichmentProvider, MockProvider, ProviderError,
};
pub use ledger::{AdmitOutcome, ShaLedger};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::label::ClassLabel;

/// Only credit transactions are classified; debits are recognised so they can
/// be skipped with a warning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransactionType {
    #[default]
    Credit,
    Debit,
}

impl TransactionType {
    fn is_credit(&self) -> bool {
        *self == TransactionType::Credit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTransaction {
    #[serde(rename = "Sha")]
    pub sha: String,
    #[serde(rename = "Date", with = "timestamp")]
    pub date: DateTime<Utc>,
    #[serde(rename = "Amount")]
    pub amount: f64,
    #[serde(rename = "Description")]
    pub description: String,
    #[serde(rename = "Type", default, skip_serializing_if = "TransactionType::is_credit")]
    pub kind: TransactionType,
}

/// A raw transaction together with the customer/bank/industry context it was
/// found in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTransaction {
    pub customer_id: u64,
    pub bank: String,
    pub industry: String,
    pub tx: RawTransaction,
}

/// Transaction plus its ground-truth class when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTransaction {
    pub transaction: EnrichedTransaction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarning {
    pub sha: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based data row (the header is not counted).
    pub row: usize,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed document at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("invalid field {path}: {message}")]
    Field { path: String, message: String },
    #[error("no accounts")]
    NoAccounts,
    #[error("duplicate sha {0}")]
    DuplicateSha(String),
    #[error("sha {0} already ingested with different content")]
    ShaConflict(String),
    #[error("unknown CSV header {0:?}")]
    UnknownHeader(String),
    #[error("missing CSV column {0:?}")]
    MissingColumn(String),
    #[error("invalid rows: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidRows(Vec<RowError>),
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("knowledge file: {0}")]
    Knowledge(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
