//! Batch output documents: final classifications and full probability maps.

use serde::{Deserialize, Serialize};

use super::{ClassProbabilities, Prediction};
use crate::label::ClassLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalClassification {
    #[serde(rename = "Sha")]
    pub sha: String,
    #[serde(rename = "FinalClassification")]
    pub final_classification: ClassLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalOutput {
    #[serde(rename = "Transactions")]
    pub transactions: Vec<FinalClassification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRecord {
    #[serde(rename = "Sha")]
    pub sha: String,
    #[serde(flatten)]
    pub probabilities: ClassProbabilities,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityOutput {
    #[serde(rename = "Transactions")]
    pub transactions: Vec<ProbabilityRecord>,
}

impl FinalOutput {
    pub fn from_predictions<'a>(preds: impl IntoIterator<Item = &'a Prediction>) -> Self {
        FinalOutput {
            transactions: preds
                .into_iter()
                .map(|p| FinalClassification {
                    sha: p.sha.clone(),
                    final_classification: p.final_class,
                })
                .collect(),
        }
    }
}

impl ProbabilityOutput {
    pub fn from_predictions<'a>(preds: impl IntoIterator<Item = &'a Prediction>) -> Self {
        ProbabilityOutput {
            transactions: preds
                .into_iter()
                .map(|p| ProbabilityRecord {
                    sha: p.sha.clone(),
                    probabilities: p.probabilities,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds() -> Vec<Prediction> {
        vec![
            Prediction::from_scores("SHA_0001", [0.1, 0.5, 0.3, 0.1, 0.0], "m"),
            Prediction::from_scores("SHA_0003", [0.0, 0.3, 0.2, 0.5, 0.0], "m"),
        ]
    }

    #[test]
    fn final_output_field_names() {
        let json = serde_json::to_value(FinalOutput::from_predictions(&preds())).unwrap();
        assert_eq!(json["Transactions"][0]["Sha"], "SHA_0001");
        assert_eq!(json["Transactions"][0]["FinalClassification"], "INCOME_INVOICE");
        assert_eq!(json["Transactions"][1]["FinalClassification"], "INCOME_CHEQUE");
    }

    #[test]
    fn probability_output_keys() {
        let json = serde_json::to_value(ProbabilityOutput::from_predictions(&preds())).unwrap();
        let rec = json["Transactions"][0].as_object().unwrap();
        let keys: Vec<&str> = rec.keys().map(String::as_str).collect();
        for k in [
            "Sha",
            "funding",
            "income_invoice",
            "income_cash",
            "income_cheque",
            "other",
        ] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(keys.len(), 6);
    }

    #[test]
    fn reads_hyphenated_cheque_key() {
        let doc = r#"{"Transactions":[{"Sha":"SHA_0001","income_invoice":0.5,"income_cash":0.3,
            "funding":0.1,"income-cheque":0.1,"other":0.0}]}"#;
        let out: ProbabilityOutput = serde_json::from_str(doc).unwrap();
        assert_eq!(
            out.transactions[0].probabilities.get(ClassLabel::IncomeCheque),
            0.1
        );
        assert_eq!(out.transactions[0].sha, "SHA_0001");
    }
}
