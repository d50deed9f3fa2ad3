//! Best-effort enrichment with named entities from external knowledge sources.
//!
//! Only an in-process [`MockProvider`] ships; real services plug in through
//! [`EnrichmentProvider`]. A failing provider never fails ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ContextTransaction, IngestError, IngestWarning, RawTransaction};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("provider {provider} failed: {message}")]
pub struct ProviderError {
    pub provider: String,
    pub message: String,
}

pub trait EnrichmentProvider: Send + Sync {
    fn name(&self) -> &str;
    fn lookup(&self, tx: &ContextTransaction) -> Result<Vec<String>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedTransaction {
    pub raw: RawTransaction,
    pub customer_id: u64,
    pub bank: String,
    pub industry: String,
    #[serde(default)]
    pub enrichment_tags: BTreeMap<String, Vec<String>>,
}

impl EnrichedTransaction {
    pub fn sha(&self) -> &str {
        &self.raw.sha
    }

    /// Wraps a transaction without consulting any provider.
    pub fn bare(tx: ContextTransaction) -> Self {
        EnrichedTransaction {
            raw: tx.tx,
            customer_id: tx.customer_id,
            bank: tx.bank,
            industry: tx.industry,
            enrichment_tags: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enrichment {
    pub transaction: EnrichedTransaction,
    pub warnings: Vec<IngestWarning>,
}

/// Runs every provider against `tx`. Providers that return no tags leave no
/// entry; providers that fail contribute a warning instead.
pub fn enrich(tx: ContextTransaction, providers: &[&dyn EnrichmentProvider]) -> Enrichment {
    let mut tags = BTreeMap::new();
    let mut warnings = Vec::new();
    for provider in providers {
        match provider.lookup(&tx) {
            Ok(found) if found.is_empty() => {}
            Ok(found) => {
                tags.insert(provider.name().to_string(), found);
            }
            Err(e) => warnings.push(IngestWarning {
                sha: Some(tx.tx.sha.clone()),
                message: e.to_string(),
            }),
        }
    }
    let mut transaction = EnrichedTransaction::bare(tx);
    transaction.enrichment_tags = tags;
    Enrichment {
        transaction,
        warnings,
    }
}

pub fn enrich_all(
    txs: impl IntoIterator<Item = ContextTransaction>,
    providers: &[&dyn EnrichmentProvider],
) -> (Vec<EnrichedTransaction>, Vec<IngestWarning>) {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for tx in txs {
        let e = enrich(tx, providers);
        out.push(e.transaction);
        warnings.extend(e.warnings);
    }
    (out, warnings)
}

/// Lookup table keyed by description term. A term matches when it occurs in
/// the description, ignoring case.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockProvider {
    name: String,
    knowledge: BTreeMap<String, Vec<String>>,
}

impl MockProvider {
    pub fn new(knowledge: BTreeMap<String, Vec<String>>) -> Self {
        Self::named("mock", knowledge)
    }

    pub fn named(name: impl Into<String>, knowledge: BTreeMap<String, Vec<String>>) -> Self {
        let knowledge = knowledge
            .into_iter()
            .map(|(term, tags)| (term.to_lowercase(), tags))
            .collect();
        MockProvider {
            name: name.into(),
            knowledge,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, IngestError> {
        let knowledge: BTreeMap<String, Vec<String>> =
            serde_json::from_slice(bytes).map_err(|e| IngestError::Knowledge(e.to_string()))?;
        Ok(Self::new(knowledge))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let bytes = std::fs::read(path.as_ref())
            .map_err(|e| IngestError::Knowledge(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&bytes)
    }
}

impl EnrichmentProvider for MockProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn lookup(&self, tx: &ContextTransaction) -> Result<Vec<String>, ProviderError> {
        let desc = tx.tx.description.to_lowercase();
        let mut out: Vec<String> = Vec::new();
        for (term, tags) in &self.knowledge {
            if !term.is_empty() && desc.contains(term.as_str()) {
                for t in tags {
                    if !out.contains(t) {
                        out.push(t.clone());
                    }
                }
            }
        }
        Ok(out)
    }
}
