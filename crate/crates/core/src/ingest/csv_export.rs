//! Flat CSV export: one transaction per row.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{
    timestamp, ContextTransaction, IngestError, IngestWarning, RawTransaction, RowError, TransactionType,
};
use crate::label::ClassLabel;

pub const CSV_HEADERS: [&str; 6] = [
    "Customer Id",
    "Bank Name",
    "Transaction Amount",
    "Transaction Date",
    "Transaction Description",
    "Industry Class",
];
const TYPE_HEADER: &str = "Transaction Type";
const LABEL_HEADER: &str = "Classification";

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    /// 1-based data row.
    pub row: usize,
    pub transaction: ContextTransaction,
    pub label: Option<ClassLabel>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvBatch {
    pub records: Vec<CsvRecord>,
    pub warnings: Vec<IngestWarning>,
}

struct Columns {
    required: [usize; 6],
    kind: Option<usize>,
    label: Option<usize>,
}

fn resolve_columns(headers: &csv::StringRecord) -> Result<Columns, IngestError> {
    let mut required = [usize::MAX; 6];
    let mut kind = None;
    let mut label = None;
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if let Some(pos) = CSV_HEADERS.iter().position(|&c| c == h) {
            required[pos] = i;
        } else if h == TYPE_HEADER {
            kind = Some(i);
        } else if h == LABEL_HEADER {
            label = Some(i);
        } else {
            return Err(IngestError::UnknownHeader(h.to_string()));
        }
    }
    if let Some(missing) = required.iter().position(|&i| i == usize::MAX) {
        return Err(IngestError::MissingColumn(CSV_HEADERS[missing].to_string()));
    }
    Ok(Columns {
        required,
        kind,
        label,
    })
}

/// Content-derived transaction id for rows that carry none.
fn content_sha(
    customer_id: u64,
    bank: &str,
    amount: f64,
    date: &str,
    description: &str,
    industry: &str,
) -> String {
    let mut h = Sha256::new();
    for part in [
        customer_id.to_string().as_str(),
        bank,
        amount.to_string().as_str(),
        date,
        description,
        industry,
    ] {
        h.update(part.as_bytes());
        h.update([0x1f]);
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses a CSV export. Every row is validated before anything is returned;
/// all bad rows are reported together. Debit rows are skipped with a warning
/// and byte-identical duplicate rows collapse into one record.
pub fn parse_raw_csv(document: &[u8]) -> Result<CsvBatch, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Fields)
        .from_reader(document);
    let cols = resolve_columns(reader.headers()?)?;

    let mut batch = CsvBatch::default();
    let mut errors = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError {
                    row,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let [c_id, c_bank, c_amount, c_date, c_desc, c_ind] = cols.required;

        let mut row_errors = Vec::new();
        let customer_id = field(c_id)
            .parse::<u64>()
            .map_err(|_| row_errors.push(format!("bad customer id {:?}", field(c_id))))
            .ok();
        let amount = field(c_amount).parse::<f64>().ok().filter(|a| a.is_finite());
        if amount.is_none() {
            row_errors.push(format!("bad amount {:?}", field(c_amount)));
        }
        let date = timestamp::parse(field(c_date));
        if date.is_none() {
            row_errors.push(format!("bad date {:?}", field(c_date)));
        }
        let kind = match cols.kind.map(field) {
            None | Some("") => Some(TransactionType::Credit),
            Some(k) if k.eq_ignore_ascii_case("credit") => Some(TransactionType::Credit),
            Some(k) if k.eq_ignore_ascii_case("debit") => Some(TransactionType::Debit),
            Some(k) => {
                row_errors.push(format!("bad transaction type {k:?}"));
                None
            }
        };
        let label = match cols.label.map(field) {
            None | Some("") => None,
            Some(l) => match l.parse::<ClassLabel>() {
                Ok(l) => Some(l),
                Err(e) => {
                    row_errors.push(e.to_string());
                    None
                }
            },
        };

        if !row_errors.is_empty() {
            errors.push(RowError {
                row,
                message: row_errors.join(", "),
            });
            continue;
        }
        let (customer_id, amount, date, kind) = (
            customer_id.unwrap(),
            amount.unwrap(),
            date.unwrap(),
            kind.unwrap(),
        );

        let bank = field(c_bank).to_string();
        let description = field(c_desc).to_string();
        let industry = field(c_ind).to_string();
        let sha = content_sha(
            customer_id,
            &bank,
            amount,
            &timestamp::format(&date),
            &description,
            &industry,
        );

        if kind == TransactionType::Debit {
            batch.warnings.push(IngestWarning {
                sha: Some(sha),
                message: format!("row {row}: debit transaction skipped"),
            });
            continue;
        }
        if let Some(first) = seen.get(&sha) {
            batch.warnings.push(IngestWarning {
                sha: Some(sha),
                message: format!("row {row}: duplicate of row {first}"),
            });
            continue;
        }
        seen.insert(sha.clone(), row);

        batch.records.push(CsvRecord {
            row,
            transaction: ContextTransaction {
                customer_id,
                bank,
                industry,
                tx: RawTransaction {
                    sha,
                    date,
                    amount,
                    description,
                    kind,
                },
            },
            label,
        });
    }

    if errors.is_empty() {
        Ok(batch)
    } else {
        Err(IngestError::InvalidRows(errors))
    }
}
