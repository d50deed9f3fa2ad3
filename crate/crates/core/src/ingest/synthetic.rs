//! Seeded synthetic transaction generator for desk-scale experiments.
//!
//! Class labels are allocated with exact proportions (largest remainder) and
//! then shuffled, so the label histogram tracks `class_mix` to within one
//! record per class regardless of `n_transactions`.
//!
//! Each customer has a fixed bank and industry. A transaction's description is
//! a shuffled mix of class tokens, shared noise tokens and an occasional
//! masked reference code; its amount comes from the class's range and its
//! date from a window of `date_span_days` (six months of statements by
//! default).

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnrichedTransaction, IngestError, LabeledTransaction, RawTransaction, TransactionType};
use crate::label::{ClassLabel, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_customers: usize,
    pub n_transactions: usize,
    /// Relative class weights in canonical class order.
    pub class_mix: [f64; NUM_CLASSES],
    pub vocab_per_class: [Vec<String>; NUM_CLASSES],
    /// Inclusive-exclusive amount range per class.
    pub amount_ranges: [(f64, f64); NUM_CLASSES],
    /// Inclusive range of class tokens per description.
    pub class_tokens: (usize, usize),
    pub noise_tokens: Vec<String>,
    /// Inclusive range of noise tokens per description.
    pub noise_per_description: (usize, usize),
    /// Dates are drawn uniformly from this many days starting at `start_date`.
    pub start_date: NaiveDate,
    pub date_span_days: u32,
    pub banks: Vec<String>,
    pub industries: Vec<String>,
    /// Probability that a transaction is booked to a customer whose industry
    /// favours its class (industry `i` favours class `i mod 5`) rather than to
    /// a uniformly chosen customer.
    pub industry_affinity: f64,
    /// Probability that one class token is swapped for another class's token.
    pub confusion_rate: f64,
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 42,
            n_customers: 200,
            n_transactions: 5_000,
            class_mix: [0.15, 0.30, 0.25, 0.10, 0.20],
            vocab_per_class: [
                words(&[
                    "loan",
                    "funding",
                    "advance",
                    "disbursement",
                    "capital",
                    "facility",
                ]),
                words(&["invoice", "inv", "myob", "xero", "remittance", "receivable"]),
                words(&["cash", "deposit", "branch", "atm", "counter", "coins"]),
                words(&["cheque", "chq", "clearance", "chqdep", "drawn", "bankcheque"]),
                words(&["transfer", "internal", "refund", "interest", "reversal", "sweep"]),
            ],
            amount_ranges: [
                (2_000.0, 50_000.0),
                (100.0, 8_000.0),
                (20.0, 2_000.0),
                (50.0, 5_000.0),
                (1.0, 3_000.0),
            ],
            class_tokens: (2, 3),
            noise_per_description: (0, 2),
            noise_tokens: words(&[
                "credit", "direct", "online", "payment", "ref", "from", "bank", "au", "pty", "ltd",
            ]),
            start_date: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
            date_span_days: 180,
            banks: words(&["ANZ", "NAB", "Westpac", "CBA", "Suncorp Bank", "Bendigo"]),
            industries: words(&[
                "Hospitality",
                "Building and Trade",
                "Professional services",
                "Retail",
                "Meat",
                "Transport",
            ]),
            confusion_rate: 0.05,
            industry_affinity: 0.3,
        }
    }
}

impl SyntheticConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_transactions(mut self, n: usize) -> Self {
        self.n_transactions = n;
        self
    }

    pub fn with_class_mix(mut self, mix: [f64; NUM_CLASSES]) -> Self {
        self.class_mix = mix;
        self
    }

    fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::Config(m.to_string()));
        if self.n_transactions == 0 || self.n_customers == 0 {
            return bad("counts must be positive");
        }
        if self.class_tokens.0 == 0 || self.class_tokens.0 > self.class_tokens.1 {
            return bad("class_tokens must be a non-empty range starting at 1 or more");
        }
        if !(0.0..=1.0).contains(&self.industry_affinity) {
            return bad("industry_affinity must be in [0, 1]");
        }
        if self.date_span_days == 0 {
            return bad("date_span_days must be positive");
        }
        if self.noise_per_description.0 > self.noise_per_description.1 {
            return bad("noise_per_description must be a valid range");
        }
        if self.class_mix.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("class weights must be finite and non-negative");
        }
        if self.class_mix.iter().sum::<f64>() <= 0.0 {
            return bad("class weights sum to zero");
        }
        for (i, w) in self.class_mix.iter().enumerate() {
            if *w > 0.0 && self.vocab_per_class[i].is_empty() {
                return bad(&format!("class {} has no vocabulary", ClassLabel::ALL[i]));
            }
            let (lo, hi) = self.amount_ranges[i];
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(&format!("class {} has an empty amount range", ClassLabel::ALL[i]));
            }
        }
        if self.banks.is_empty() || self.industries.is_empty() {
            return bad("banks and industries must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.confusion_rate) {
            return bad("confusion_rate must lie in [0, 1]");
        }
        Ok(())
    }

    /// Exact per-class counts by the largest-remainder method.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let total: f64 = self.class_mix.iter().sum();
        let n = self.n_transactions;
        let quotas: Vec<f64> = self.class_mix.iter().map(|w| w / total * n as f64).collect();
        let mut counts = [0usize; NUM_CLASSES];
        for (c, q) in counts.iter_mut().zip(&quotas) {
            *c = q.floor() as usize;
        }
        let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let short = n - counts.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            counts[i] += 1;
        }
        counts
    }
}

/// Generates a labeled dataset. The output is a pure function of `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<LabeledTransaction>, IngestError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut labels: Vec<ClassLabel> = config
        .class_counts()
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n(ClassLabel::ALL[i], n))
        .collect();
    labels.shuffle(&mut rng);

    let customers: Vec<(String, usize)> = (0..config.n_customers)
        .map(|_| {
            (
                config.banks.choose(&mut rng).unwrap().clone(),
                rng.random_range(0..config.industries.len()),
            )
        })
        .collect();
    let mut favouring: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (c, (_, ind)) in customers.iter().enumerate() {
        favouring[ind % NUM_CLASSES].push(c);
    }

    let live: Vec<usize> = (0..NUM_CLASSES).filter(|&i| config.class_mix[i] > 0.0).collect();

    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let pool = &favouring[label.index()];
            let customer = if !pool.is_empty() && rng.random_bool(config.industry_affinity) {
                *pool.choose(&mut rng).unwrap()
            } else {
                rng.random_range(0..config.n_customers)
            };
            let bank = customers[customer].0.clone();
            let industry = config.industries[customers[customer].1].clone();
            let (lo, hi) = config.amount_ranges[label.index()];
            let amount = (rng.random_range(lo..hi) * 100.0).round() / 100.0;
            let day = config.start_date + Duration::days(rng.random_range(0..config.date_span_days as i64));
            let date = Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).unwrap());
            let description = describe(config, label, &live, &mut rng);
            LabeledTransaction {
                transaction: EnrichedTransaction {
                    raw: RawTransaction {
                        sha: format!("SYN_{i:06}"),
                        date,
                        amount,
                        description,
                        kind: TransactionType::Credit,
                    },
                    customer_id: customer as u64 + 1,
                    bank,
                    industry,
                    enrichment_tags: BTreeMap::new(),
                },
                label: Some(label),
            }
        })
        .collect();
    Ok(records)
}

fn describe(config: &SyntheticConfig, label: ClassLabel, live: &[usize], rng: &mut ChaCha8Rng) -> String {
    let vocab = &config.vocab_per_class[label.index()];
    let mut tokens: Vec<String> = Vec::new();
    let (lo, hi) = config.class_tokens;
    for _ in 0..rng.random_range(lo..=hi) {
        tokens.push(vocab.choose(rng).unwrap().clone());
    }
    if live.len() > 1 && rng.random_bool(config.confusion_rate) {
        let other = loop {
            let c = *live.choose(rng).unwrap();
            if c != label.index() {
                break c;
            }
        };
        tokens[0] = config.vocab_per_class[other].choose(rng).unwrap().clone();
    }
    if !config.noise_tokens.is_empty() {
        let (lo, hi) = config.noise_per_description;
        for _ in 0..rng.random_range(lo..=hi) {
            tokens.push(config.noise_tokens.choose(rng).unwrap().clone());
        }
    }
    if rng.random_bool(0.5) {
        tokens.push(format!(
            "{}xxx{}",
            rng.random_range(1..10),
            rng.random_range(0..10)
        ));
    }
    tokens.shuffle(rng);
    tokens.join(" ").to_uppercase()
}
