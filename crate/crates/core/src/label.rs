//! The five credit-transaction classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Output class of the classifier. Declaration order is the canonical order
/// used for tie-breaking, matrix indexing and serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassLabel {
    Funding,
    IncomeInvoice,
    IncomeCash,
    IncomeCheque,
    Other,
}

pub const NUM_CLASSES: usize = 5;

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::Funding,
        ClassLabel::IncomeInvoice,
        ClassLabel::IncomeCash,
        ClassLabel::IncomeCheque,
        ClassLabel::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        Self::ALL.get(i).copied()
    }

    /// Upper-case name used for final classifications (`INCOME_CASH`).
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Funding => "FUNDING",
            ClassLabel::IncomeInvoice => "INCOME_INVOICE",
            ClassLabel::IncomeCash => "INCOME_CASH",
            ClassLabel::IncomeCheque => "INCOME_CHEQUE",
            ClassLabel::Other => "OTHER",
        }
    }

    /// Lower snake-case key used in probability maps (`income_cash`).
    pub fn probability_key(self) -> &'static str {
        match self {
            ClassLabel::Funding => "funding",
            ClassLabel::IncomeInvoice => "income_invoice",
            ClassLabel::IncomeCash => "income_cash",
            ClassLabel::IncomeCheque => "income_cheque",
            ClassLabel::Other => "other",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown class label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for ClassLabel {
    type Err = UnknownLabel;

    /// Accepts the canonical upper-case name, the probability key, and the
    /// hyphenated spelling (`income-cheque`) seen in some exports.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', ' '], "_");
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}
