use std::collections::HashMap;

use super::{ContextTransaction, IngestError};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdmitOutcome {
    pub accepted: Vec<String>,
    /// Shas already present with identical content.
    pub duplicates: Vec<String>,
}

/// Tracks every sha admitted so far. Re-admitting identical content is a
/// no-op; the same sha with different content is a conflict.
#[derive(Debug, Clone, Default)]
pub struct ShaLedger {
    seen: HashMap<String, ContextTransaction>,
}

impl ShaLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn contains(&self, sha: &str) -> bool {
        self.seen.contains_key(sha)
    }

    /// Admits a batch atomically: on conflict nothing is recorded.
    pub fn admit(&mut self, batch: &[ContextTransaction]) -> Result<AdmitOutcome, IngestError> {
        let mut outcome = AdmitOutcome::default();
        let mut pending: HashMap<&str, &ContextTransaction> = HashMap::new();
        for tx in batch {
            let sha = tx.tx.sha.as_str();
            let prior = self.seen.get(sha).or_else(|| pending.get(sha).copied());
            match prior {
                Some(p) if p == tx => outcome.duplicates.push(sha.to_string()),
                Some(_) => return Err(IngestError::ShaConflict(sha.to_string())),
                None => {
                    pending.insert(sha, tx);
                    outcome.accepted.push(sha.to_string());
                }
            }
        }
        for (sha, tx) in pending {
            self.seen.insert(sha.to_string(), tx.clone());
        }
        Ok(outcome)
    }
}
