//! Small reference datasets used by tests, benchmarks and the demo server.
//!
//! * [`LISTING_1`]: an application document exactly as exported, trailing
//!   commas included.
//! * [`TABLE_4_CSV`]: four raw transactions in the CSV export format.
//! * [`table5_transactions`]: eight transactions with opaque integer-coded
//!   banks and industries.
//! * [`reference_rows`]: nine scored transactions with actual and predicted
//!   classes, and [`reference_fixture`] which joins them with transactions,
//!   features and a model trained on the predicted labels.

use std::collections::BTreeMap;

use chrono::{NaiveDate, TimeZone, Utc};

use crate::exec::Execution;
use crate::featurize::{build_all, fit_schema, FeatureSchema, FeatureVector};
use crate::ingest::{EnrichedTransaction, RawTransaction, TransactionType};
use crate::label::ClassLabel;
use crate::pnn::{PnnModel, Prediction, PriorMode};

pub const LISTING_1: &str = r#"{   "ApplicationId": "32000",
    "IndustryCategory": "Meat",
    "BankAccounts": [
        {
            "Bank": "Suncorp Bank",
            "AccountName": "Cash Management Account",
            "AccountNumber": "123-456-789",
            "Transactions": [
                {
                    "Sha": "SHA_0001",
                    "Date": "2018-09-01T00:00:00",
                    "Amount": 7.47,
                    "Description": "DIRECT CREDIT A 123-56NSW",
                },
                {
                    "Sha": "SHA_0002",
                    "Date": "2018-09-02T00:00:00",
                    "Amount": 13.5,
                    "Description": "EFTPOS",
                },
                {
                    "Sha": "SHA_0004",
                    "Date": "2018-09-02T00:00:00",
                    "Amount": 15.5,
                    "Description": "EFTPOS",
                }
            ]
        },
        {
            "Bank": "Suncorp Bank",
            "AccountName": "Everyday Account",
            "AccountNickname": null,
            "AccountNumber": "123-456-788",
            "Transactions": [
                {
                    "Sha": "SHA_0003",
                    "Date": "2018-09-01T00:00:00",
                    "Amount": 1000.15,
                    "Description": "Commissions for xyz",
                }
            ]
        }
    ],
    }
"#;

pub const TABLE_4_CSV: &str = "\
Customer Id,Bank Name,Transaction Amount,Transaction Date,Transaction Description,Industry Class
1,ANZ,280.97,2019-06-09,EFTPOS TRANSACTION,Hospitality
2,NAB,802.47,2020-03-04,INTER-BANK CREDIT Wages Bank,Building and Trade
3,NAB,150,2020-11-02,\"TRANSFER CREDIT ONLINE Linked transaction CONSTRUC\",Hospitality
4,NAB,626,2019-09-18,McDonald 3xxxcx6,Professional services
";

fn tx(
    sha: &str,
    customer_id: u64,
    bank: &str,
    amount: f64,
    (y, m, d): (i32, u32, u32),
    description: &str,
    industry: &str,
) -> EnrichedTransaction {
    let day = NaiveDate::from_ymd_opt(y, m, d).expect("valid fixture date");
    EnrichedTransaction {
        raw: RawTransaction {
            sha: sha.to_string(),
            date: Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).unwrap()),
            amount,
            description: description.to_string(),
            kind: TransactionType::Credit,
        },
        customer_id,
        bank: bank.to_string(),
        industry: industry.to_string(),
        enrichment_tags: BTreeMap::new(),
    }
}

pub fn table5_transactions() -> Vec<EnrichedTransaction> {
    vec![
        tx(
            "T5_01",
            22931,
            "2",
            4.453,
            (2020, 6, 9),
            "direct credit 2xxxx3 myob pay by 000003",
            "1",
        ),
        tx(
            "T5_02",
            22241,
            "33",
            2.80,
            (2020, 6, 9),
            "miscellaneous credit internet payment",
            "1",
        ),
        tx(
            "T5_03",
            27909,
            "46",
            0.11,
            (2021, 1, 4),
            "deposit payment bank",
            "4",
        ),
        tx(
            "T5_04",
            22819,
            "25",
            8.8,
            (2021, 2, 15),
            "payment from abc xyz",
            "4",
        ),
        tx(
            "T5_05",
            28707,
            "19",
            0.5,
            (2021, 4, 20),
            "season 2xxx45 bank 0xxxx",
            "7",
        ),
        tx(
            "T5_06",
            27414,
            "3",
            1.4,
            (2021, 1, 14),
            "name else person transfer",
            "2",
        ),
        tx(
            "T5_07",
            25459,
            "51",
            0.4,
            (2020, 9, 29),
            "payment received mangoes transfer amount for bbbb",
            "4",
        ),
        tx(
            "T5_08",
            21474,
            "117",
            1.5,
            (2021, 8, 20),
            "miscellaneous credit internet payment purchase",
            "6",
        ),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub sha: String,
    pub actual: ClassLabel,
    pub predicted: ClassLabel,
    /// Published scores in canonical class order; rows need not sum to one.
    pub scores: [f64; 5],
}

impl ReferenceRow {
    pub fn prediction(&self) -> Prediction {
        self.prediction_for(REFERENCE_MODEL_ID)
    }

    pub fn prediction_for(&self, model_id: &str) -> Prediction {
        Prediction::from_scores(self.sha.clone(), self.scores, model_id)
    }
}

pub const REFERENCE_MODEL_ID: &str = "reference-scores";

pub fn reference_rows() -> Vec<ReferenceRow> {
    use ClassLabel::*;
    let rows = [
        (IncomeInvoice, IncomeInvoice, [0.14, 0.328, 0.325, 0.074, 0.141]),
        (Funding, Funding, [0.41, 0.023, 0.273, 0.005, 0.34]),
        (Funding, Funding, [0.551, 0.062, 0.021, 0.35, 0.185]),
        (IncomeInvoice, IncomeCash, [0.141, 0.314, 0.329, 0.075, 0.142]),
        (IncomeInvoice, IncomeCash, [0.070, 0.133, 0.577, 0.021, 0.199]),
        (Funding, Funding, [0.536, 0.005, 0.201, 0.125, 0.133]),
        (Funding, Other, [0.214, 0.063, 0.273, 0.005, 0.445]),
        (IncomeInvoice, IncomeCheque, [0.056, 0.203, 0.217, 0.498, 0.026]),
        (IncomeInvoice, IncomeCash, [0.155, 0.306, 0.312, 0.147, 0.080]),
    ];
    rows.into_iter()
        .enumerate()
        .map(|(i, (actual, predicted, scores))| ReferenceRow {
            sha: format!("REF_{:02}", i + 1),
            actual,
            predicted,
            scores,
        })
        .collect()
}

/// Illustrative transactions behind the nine scored rows.
pub fn reference_transactions() -> Vec<EnrichedTransaction> {
    vec![
        tx(
            "REF_01",
            101,
            "ANZ",
            1820.00,
            (2020, 3, 2),
            "DIRECT CREDIT MYOB PAY INV 2231",
            "Hospitality",
        ),
        tx(
            "REF_02",
            102,
            "NAB",
            25000.00,
            (2020, 3, 9),
            "LOAN ADVANCE PROSPA FUNDING",
            "Building and Trade",
        ),
        tx(
            "REF_03",
            103,
            "NAB",
            40000.00,
            (2020, 5, 14),
            "FUNDING DISBURSEMENT CAPITAL",
            "Retail",
        ),
        tx(
            "REF_04",
            104,
            "ANZ",
            640.50,
            (2020, 6, 1),
            "CASH DEPOSIT INVOICE 1182",
            "Hospitality",
        ),
        tx(
            "REF_05",
            105,
            "Westpac",
            315.00,
            (2020, 6, 19),
            "BRANCH DEPOSIT INV 771",
            "Retail",
        ),
        tx(
            "REF_06",
            106,
            "NAB",
            18000.00,
            (2020, 8, 3),
            "BUSINESS LOAN FUNDING ADVANCE",
            "Meat",
        ),
        tx(
            "REF_07",
            107,
            "CBA",
            12500.00,
            (2020, 9, 22),
            "TRANSFER CREDIT ONLINE FUNDING",
            "Professional services",
        ),
        tx(
            "REF_08",
            108,
            "ANZ",
            2200.00,
            (2020, 10, 5),
            "CHEQUE DEPOSIT INVOICE 5521",
            "Building and Trade",
        ),
        tx(
            "REF_09",
            109,
            "Westpac",
            480.25,
            (2020, 11, 27),
            "EFTPOS CASH INVOICE PAYMENT",
            "Hospitality",
        ),
    ]
}

#[derive(Debug, Clone)]
pub struct ReferenceFixture {
    pub transactions: Vec<EnrichedTransaction>,
    pub schema: FeatureSchema,
    pub features: Vec<FeatureVector>,
    pub model: PnnModel,
    /// The reference scores, tagged with `model`'s id.
    pub predictions: Vec<Prediction>,
    pub actuals: Vec<(String, ClassLabel)>,
}

/// Joins the nine scored rows with transactions, a fitted schema and a model
/// trained on the predicted labels (all five classes occur among them).
pub fn reference_fixture() -> ReferenceFixture {
    let rows = reference_rows();
    let transactions = reference_transactions();
    let schema = fit_schema(&transactions, 32, None).expect("fixture schema");
    let features = build_all(&transactions, &schema, Execution::Sequential);
    let labeled: Vec<(&FeatureVector, ClassLabel)> = features
        .iter()
        .zip(&rows)
        .map(|(fv, r)| (fv, r.predicted))
        .collect();
    let model = PnnModel::train(&labeled, 0.2, PriorMode::Empirical).expect("fixture model");
    let predictions = rows.iter().map(|r| r.prediction_for(model.model_id())).collect();
    let actuals = rows.iter().map(|r| (r.sha.clone(), r.actual)).collect();
    ReferenceFixture {
        transactions,
        schema,
        features,
        model,
        predictions,
        actuals,
    }
}
