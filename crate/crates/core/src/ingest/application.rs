use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{ContextTransaction, IngestError, RawTransaction};
use crate::featurize::fnv1a64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawApplication {
    #[serde(rename = "ApplicationId")]
    pub application_id: String,
    #[serde(rename = "IndustryCategory")]
    pub industry_category: String,
    #[serde(rename = "BankAccounts")]
    pub bank_accounts: Vec<RawAccount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAccount {
    #[serde(rename = "Bank")]
    pub bank: String,
    #[serde(rename = "AccountName")]
    pub account_name: String,
    #[serde(rename = "AccountNickname", default)]
    pub account_nickname: Option<String>,
    #[serde(rename = "AccountNumber")]
    pub account_number: String,
    #[serde(rename = "Transactions")]
    pub transactions: Vec<RawTransaction>,
}

impl RawApplication {
    /// Numeric application ids are used as the customer id directly; anything
    /// else is hashed.
    pub fn customer_id(&self) -> u64 {
        self.application_id
            .trim()
            .parse()
            .unwrap_or_else(|_| fnv1a64(self.application_id.as_bytes()))
    }

    pub fn shas(&self) -> Vec<&str> {
        self.transactions().map(|t| t.sha.as_str()).collect()
    }

    pub fn transactions(&self) -> impl Iterator<Item = &RawTransaction> {
        self.bank_accounts.iter().flat_map(|a| a.transactions.iter())
    }

    /// Flattens the document into per-transaction records carrying the
    /// account's bank and the application's industry.
    pub fn transactions_with_context(&self) -> Vec<ContextTransaction> {
        let customer_id = self.customer_id();
        self.bank_accounts
            .iter()
            .flat_map(|acct| {
                acct.transactions.iter().map(move |tx| ContextTransaction {
                    customer_id,
                    bank: acct.bank.clone(),
                    industry: self.industry_category.clone(),
                    tx: tx.clone(),
                })
            })
            .collect()
    }

    fn validate(&self) -> Result<(), IngestError> {
        if self.application_id.trim().is_empty() {
            return Err(IngestError::Field {
                path: "ApplicationId".into(),
                message: "must not be empty".into(),
            });
        }
        if self.bank_accounts.is_empty() {
            return Err(IngestError::NoAccounts);
        }
        let mut seen = HashSet::new();
        for (i, acct) in self.bank_accounts.iter().enumerate() {
            if acct.account_number.trim().is_empty() {
                return Err(IngestError::Field {
                    path: format!("BankAccounts[{i}].AccountNumber"),
                    message: "must not be empty".into(),
                });
            }
            for (j, tx) in acct.transactions.iter().enumerate() {
                if tx.sha.is_empty() {
                    return Err(IngestError::Field {
                        path: format!("BankAccounts[{i}].Transactions[{j}].Sha"),
                        message: "must not be empty".into(),
                    });
                }
                if !tx.amount.is_finite() {
                    return Err(IngestError::Field {
                        path: format!("BankAccounts[{i}].Transactions[{j}].Amount"),
                        message: "must be finite".into(),
                    });
                }
                if !seen.insert(tx.sha.as_str()) {
                    return Err(IngestError::DuplicateSha(tx.sha.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Parses an application document.
///
/// Trailing commas before `}` or `]` are tolerated since exported documents
/// routinely carry them; everything else must be strict JSON.
pub fn parse_application(document: &[u8]) -> Result<RawApplication, IngestError> {
    let text = std::str::from_utf8(document).map_err(|e| IngestError::Malformed {
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let relaxed = blank_trailing_commas(text);

    let mut de = serde_json::Deserializer::from_str(&relaxed);
    let app: RawApplication = match serde_path_to_error::deserialize(&mut de) {
        Ok(app) => app,
        Err(err) => return Err(classify_error(&relaxed, err)),
    };
    de.end().map_err(|e| IngestError::Malformed {
        offset: byte_offset(&relaxed, e.line(), e.column()),
        message: e.to_string(),
    })?;

    app.validate()?;
    Ok(app)
}

fn classify_error(text: &str, err: serde_path_to_error::Error<serde_json::Error>) -> IngestError {
    let path = err.path().to_string();
    let inner = err.into_inner();
    match inner.classify() {
        serde_json::error::Category::Data => {
            let message = inner.to_string();
            // `missing field `Sha`` is reported against the enclosing object.
            let path = match missing_field_name(&message) {
                Some(field) if path == "." => field.to_string(),
                Some(field) => format!("{path}.{field}"),
                None => path,
            };
            IngestError::Field {
                path,
                message: strip_position(&message),
            }
        }
        _ => IngestError::Malformed {
            offset: byte_offset(text, inner.line(), inner.column()),
            message: strip_position(&inner.to_string()),
        },
    }
}

fn missing_field_name(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

fn strip_position(message: &str) -> String {
    match message.find(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Replaces commas that directly precede a closing bracket with spaces.
/// Byte offsets are preserved so error positions still refer to the input.
fn blank_trailing_commas(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = bytes.to_vec();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b',' => {
                let next = bytes[i + 1..].iter().find(|c| !c.is_ascii_whitespace());
                if matches!(next, Some(b'}') | Some(b']')) {
                    out[i] = b' ';
                }
            }
            _ => {}
        }
    }
    // Only ASCII commas were swapped for ASCII spaces.
    String::from_utf8(out).expect("utf-8 preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::LISTING_1;

    #[test]
    fn parses_listing_one() {
        let app = parse_application(LISTING_1.as_bytes()).unwrap();
        assert_eq!(app.application_id, "32000");
        assert_eq!(app.industry_category, "Meat");
        assert_eq!(app.bank_accounts.len(), 2);
        assert_eq!(app.transactions().count(), 4);
        let mut shas = app.shas();
        shas.sort();
        assert_eq!(shas, ["SHA_0001", "SHA_0002", "SHA_0003", "SHA_0004"]);
        assert_eq!(app.bank_accounts[0].account_nickname, None);
        assert_eq!(app.bank_accounts[1].transactions[0].amount, 1000.15);
        assert_eq!(app.customer_id(), 32000);
    }

    #[test]
    fn value_level_round_trip() {
        let app = parse_application(LISTING_1.as_bytes()).unwrap();
        let again = parse_application(serde_json::to_string(&app).unwrap().as_bytes()).unwrap();
        assert_eq!(app, again);
    }

    #[test]
    fn empty_accounts_rejected() {
        let doc = r#"{"ApplicationId":"1","IndustryCategory":"Meat","BankAccounts":[]}"#;
        let err = parse_application(doc.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "no accounts");
    }

    #[test]
    fn duplicate_sha_rejected() {
        let doc = LISTING_1.replace("SHA_0004", "SHA_0002");
        let err = parse_application(doc.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "duplicate sha SHA_0002");
    }

    #[test]
    fn missing_field_reports_path() {
        let doc = LISTING_1.replacen("\"Sha\": \"SHA_0002\",", "", 1);
        match parse_application(doc.as_bytes()).unwrap_err() {
            IngestError::Field { path, .. } => {
                assert_eq!(path, "BankAccounts[0].Transactions[1].Sha")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_byte_offset() {
        let doc = br#"{"ApplicationId": "1", "IndustryCategory" "x"}"#;
        match parse_application(doc).unwrap_err() {
            IngestError::Malformed { offset, .. } => {
                assert_eq!(&doc[offset..offset + 3], b"\"x\"")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_date_is_a_field_error() {
        let doc = LISTING_1.replacen("2018-09-01T00:00:00", "first of sept", 1);
        assert!(matches!(
            parse_application(doc.as_bytes()),
            Err(IngestError::Field { .. })
        ));
    }

    #[test]
    fn commas_inside_strings_survive() {
        let doc = LISTING_1.replace("Commissions for xyz", "a,]b,}");
        let app = parse_application(doc.as_bytes()).unwrap();
        assert_eq!(app.bank_accounts[1].transactions[0].description, "a,]b,}");
    }

    #[test]
    fn context_carries_bank_and_industry() {
        let app = parse_application(LISTING_1.as_bytes()).unwrap();
        let ctx = app.transactions_with_context();
        assert_eq!(ctx.len(), 4);
        assert!(ctx
            .iter()
            .all(|c| c.bank == "Suncorp Bank" && c.industry == "Meat"));
        assert!(ctx.iter().all(|c| c.customer_id == 32000));
    }
}
