//! HTTP endpoints. Every successful response is an envelope carrying the
//! model id and schema version it was computed under; every failure is a JSON
//! object with a single `error` field.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use evidence_core::evidence::{Correctness, EvidenceRecord, MatchMode, Outcome, Partition};
use evidence_core::explain::{what_if, ImportanceMetric, ImportanceReport};
use evidence_core::featurize::FeatureGroup;
use evidence_core::ingest::{parse_application, timestamp, EnrichedTransaction, RawTransaction};
use evidence_core::metrics::{ClassReport, EvaluationReport};
use evidence_core::pnn::{FinalOutput, PriorMode, ProbabilityOutput};
use evidence_core::ClassLabel;
use serde::{Deserialize, Serialize};

use crate::artifacts;
use crate::error::ServiceError;
use crate::pipeline::{self, IngestSummary};
use crate::state::{SessionState, Snapshot};

const UPLOAD_LIMIT: usize = 64 * 1024 * 1024;
const DEFAULT_K: usize = 5;

type Shared = Arc<SessionState>;
type Params = Query<HashMap<String, String>>;
type ApiResult = Result<Json<serde_json::Value>, ServiceError>;

#[derive(Debug, Serialize)]
struct Envelope<T> {
    model_id: Option<String>,
    schema_version: Option<u64>,
    data: T,
}

fn respond<T: Serialize>(snapshot: Option<&Snapshot>, data: T) -> ApiResult {
    let envelope = Envelope {
        model_id: snapshot.map(|s| s.model_id().to_string()),
        schema_version: snapshot.map(Snapshot::schema_version),
        data,
    };
    serde_json::to_value(envelope)
        .map(Json)
        .map_err(|e| ServiceError::Internal(e.to_string()))
}

fn require(state: &SessionState) -> Result<Arc<Snapshot>, ServiceError> {
    state.snapshot().ok_or_else(|| {
        ServiceError::Conflict("no model is loaded; ingest labeled transactions and POST /train".into())
    })
}

/// Optional query parameter; an empty value counts as absent.
fn param<T>(q: &HashMap<String, String>, key: &str) -> Result<Option<T>, ServiceError>
where
    T: FromStr,
    T::Err: Display,
{
    match q.get(key).map(|v| v.trim()).filter(|v| !v.is_empty()) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e| ServiceError::BadRequest(format!("parameter {key}: {e}"))),
    }
}

fn required<T>(q: &HashMap<String, String>, key: &str) -> Result<T, ServiceError>
where
    T: FromStr,
    T::Err: Display,
{
    param(q, key)?.ok_or_else(|| ServiceError::BadRequest(format!("missing parameter {key}")))
}

fn parse_json<'a, T: Deserialize<'a>>(body: &'a [u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid request body: {e}")))
}

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

/// Compact row used by every list endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub sha: String,
    pub date: String,
    pub amount: f64,
    pub description: String,
    pub bank: String,
    pub industry: String,
    pub predicted: ClassLabel,
    /// Probability of the predicted class.
    pub confidence: f64,
    pub actual: Option<ClassLabel>,
    pub correct: Option<bool>,
}

impl From<&EvidenceRecord> for RecordSummary {
    fn from(r: &EvidenceRecord) -> Self {
        RecordSummary {
            sha: r.sha().to_string(),
            date: timestamp::format(&r.tx.raw.date),
            amount: r.tx.raw.amount,
            description: r.tx.raw.description.clone(),
            bank: r.tx.bank.clone(),
            industry: r.tx.industry.clone(),
            predicted: r.predicted(),
            confidence: r.prediction.probabilities.get(r.predicted()),
            actual: r.actual,
            correct: r.is_correct(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionView {
    pub correct: Vec<RecordSummary>,
    pub incorrect: Vec<RecordSummary>,
    pub unlabeled: Vec<RecordSummary>,
}

impl From<&Partition<'_>> for PartitionView {
    fn from(p: &Partition<'_>) -> Self {
        let rows = |rs: &[&EvidenceRecord]| rs.iter().map(|r| RecordSummary::from(*r)).collect();
        PartitionView {
            correct: rows(&p.correct),
            incorrect: rows(&p.incorrect),
            unlabeled: rows(&p.unlabeled),
        }
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/ingest", post(ingest))
        .route("/train", post(train))
        .route("/classify", post(classify))
        .route("/report", get(report))
        .route("/metrics", get(metrics))
        .route("/transactions", get(transactions))
        .route("/transactions/{sha}", get(transaction))
        .route("/search", get(search))
        .route("/neighbors", get(neighbors))
        .route("/visualization", get(visualization))
        .route("/whatif", post(whatif))
        .route("/importance", get(importance))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct IngestResponse {
    #[serde(flatten)]
    summary: IngestSummary,
    #[serde(rename = "final")]
    final_output: FinalOutput,
    probabilities: ProbabilityOutput,
}

/// Admits a Listing-style application document or a CSV export. With a model
/// loaded, the new transactions are classified and join the evidence store.
async fn ingest(State(state): State<Shared>, body: Bytes) -> ApiResult {
    let _gate = state.write_gate().await;
    let st = state.clone();
    let (summary, snapshot, shas) = blocking(move || {
        let dir = &st.config.data_dir;
        let (summary, added) = pipeline::ingest_bytes(dir, &body)?;
        let current = st.snapshot();
        let shas: Vec<String> = added.iter().map(|l| l.transaction.sha().to_string()).collect();
        match current {
            Some(snap) if !added.is_empty() => {
                let next = snap.extended(&added, st.config.exec)?;
                artifacts::write_evidence(dir, &next.store)?;
                Ok((summary, Some(st.swap(next)), shas))
            }
            other => Ok((summary, other, Vec::new())),
        }
    })
    .await?;
    let preds: Vec<_> = match &snapshot {
        Some(s) => shas
            .iter()
            .filter_map(|sha| s.store.get(sha).map(|r| r.prediction.clone()))
            .collect(),
        None => Vec::new(),
    };
    respond(
        snapshot.as_deref(),
        IngestResponse {
            summary,
            final_output: FinalOutput::from_predictions(&preds),
            probabilities: ProbabilityOutput::from_predictions(&preds),
        },
    )
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainRequest {
    sigma: Option<f64>,
    prior_mode: Option<PriorMode>,
}

/// Reruns the pipeline over the whole corpus and swaps in the result.
async fn train(State(state): State<Shared>, body: Bytes) -> ApiResult {
    let req: TrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        TrainRequest::default()
    } else {
        parse_json(&body)?
    };
    let mut config = state.config.clone();
    if let Some(sigma) = req.sigma {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ServiceError::BadRequest(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        config.sigma = Some(sigma);
    }
    if let Some(mode) = req.prior_mode {
        config.prior_mode = mode;
    }
    let _gate = state.write_gate().await;
    let st = state.clone();
    let snapshot = blocking(move || {
        let report = pipeline::run_pipeline(&config)?;
        let snap = Snapshot::load(&config.data_dir, config.exec)?
            .ok_or_else(|| ServiceError::Internal("pipeline produced no model".into()))?;
        tracing::info!(model_id = %report.model_id, "retrained");
        Ok(st.swap(snap))
    })
    .await?;
    respond(Some(&snapshot), &snapshot.report)
}

#[derive(Debug, Deserialize)]
struct ClassifyItem {
    #[serde(flatten)]
    tx: RawTransaction,
    #[serde(rename = "Bank", default)]
    bank: String,
    #[serde(rename = "IndustryCategory", default)]
    industry: String,
    #[serde(rename = "CustomerId", default)]
    customer_id: u64,
}

#[derive(Debug, Deserialize)]
struct ClassifyRequest {
    transactions: Vec<ClassifyItem>,
}

#[derive(Debug, Serialize)]
struct ClassifyResponse {
    #[serde(rename = "final")]
    final_output: FinalOutput,
    probabilities: ProbabilityOutput,
}

/// Classifies an application document or `{"transactions": [...]}` without
/// storing anything.
async fn classify(State(state): State<Shared>, body: Bytes) -> ApiResult {
    let snapshot = require(&state)?;
    let txs: Vec<EnrichedTransaction> = if looks_like_application(&body) {
        parse_application(&body)?
            .transactions_with_context()
            .into_iter()
            .map(EnrichedTransaction::bare)
            .collect()
    } else {
        parse_json::<ClassifyRequest>(&body)?
            .transactions
            .into_iter()
            .map(|i| EnrichedTransaction {
                raw: i.tx,
                customer_id: i.customer_id,
                bank: i.bank,
                industry: i.industry,
                enrichment_tags: BTreeMap::new(),
            })
            .collect()
    };
    let exec = state.config.exec;
    let snap = snapshot.clone();
    let preds = blocking(move || snap.classify(&txs, exec)).await?;
    respond(
        Some(&snapshot),
        ClassifyResponse {
            final_output: FinalOutput::from_predictions(&preds),
            probabilities: ProbabilityOutput::from_predictions(&preds),
        },
    )
}

fn looks_like_application(body: &[u8]) -> bool {
    body.windows(b"\"BankAccounts\"".len())
        .any(|w| w == b"\"BankAccounts\"")
}

async fn report(State(state): State<Shared>) -> ApiResult {
    let snapshot = require(&state)?;
    respond(Some(&snapshot), &snapshot.report)
}

#[derive(Debug, Serialize)]
struct MetricsView<'a> {
    records: usize,
    labeled: usize,
    correct: usize,
    incorrect: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluation: Option<&'a EvaluationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class: Option<&'a ClassReport>,
}

/// Evaluation over the labeled evidence records, or one class's slice of it.
async fn metrics(State(state): State<Shared>, Query(q): Params) -> ApiResult {
    let snapshot = require(&state)?;
    let class: Option<ClassLabel> = param(&q, "class")?;
    let store = &snapshot.store;
    let evaluation = store
        .report()
        .ok_or_else(|| ServiceError::Conflict("the evidence store has no labeled records".into()))?;
    let seg = store.segregation();
    let view = MetricsView {
        records: store.len(),
        labeled: seg.correct.len() + seg.incorrect.len(),
        correct: seg.correct.len(),
        incorrect: seg.incorrect.len(),
        evaluation: class.is_none().then_some(evaluation),
        class: class.map(|c| evaluation.class(c)),
    };
    respond(Some(&snapshot), view)
}

#[derive(Debug, Serialize)]
struct TransactionsView {
    class: Option<ClassLabel>,
    metrics: Option<ClassReport>,
    #[serde(flatten)]
    records: PartitionView,
}

fn parse_correctness(q: &HashMap<String, String>) -> Result<Option<Correctness>, ServiceError> {
    Ok(param::<bool>(q, "correct")?.map(|c| {
        if c {
            Correctness::Correct
        } else {
            Correctness::Incorrect
        }
    }))
}

/// Records predicted as `class` (all records without it), split by
/// correctness and optionally restricted to one side.
async fn transactions(State(state): State<Shared>, Query(q): Params) -> ApiResult {
    let snapshot = require(&state)?;
    let class: Option<ClassLabel> = param(&q, "class")?;
    let correctness = parse_correctness(&q)?;
    let view = match class {
        Some(c) => {
            let v = snapshot.store.filter_by_classification(c, correctness);
            TransactionsView {
                class: Some(c),
                metrics: v.metrics,
                records: PartitionView::from(&v.records),
            }
        }
        None => {
            let mut p = Partition::default();
            for r in snapshot.store.records() {
                p.push(r);
            }
            match correctness {
                Some(Correctness::Correct) => {
                    p.incorrect.clear();
                    p.unlabeled.clear();
                }
                Some(Correctness::Incorrect) => {
                    p.correct.clear();
                    p.unlabeled.clear();
                }
                None => {}
            }
            TransactionsView {
                class: None,
                metrics: None,
                records: PartitionView::from(&p),
            }
        }
    };
    respond(Some(&snapshot), view)
}

#[derive(Debug, Serialize)]
struct DetailView<'a> {
    record: &'a EvidenceRecord,
    correct: Option<bool>,
}

async fn transaction(State(state): State<Shared>, Path(sha): Path<String>) -> ApiResult {
    let snapshot = require(&state)?;
    let record = snapshot
        .store
        .get(&sha)
        .ok_or_else(|| ServiceError::NotFound(format!("unknown sha {sha}")))?;
    respond(
        Some(&snapshot),
        DetailView {
            record,
            correct: record.is_correct(),
        },
    )
}

#[derive(Debug, Serialize)]
struct SearchView {
    term: String,
    #[serde(rename = "match")]
    mode: MatchMode,
    #[serde(flatten)]
    records: PartitionView,
}

async fn search(State(state): State<Shared>, Query(q): Params) -> ApiResult {
    let snapshot = require(&state)?;
    let term = q.get("term").cloned().unwrap_or_default();
    let mode: MatchMode = param(&q, "match")?.unwrap_or_default();
    let hits = snapshot.store.search(&term, mode)?;
    respond(
        Some(&snapshot),
        SearchView {
            term,
            mode,
            records: PartitionView::from(&hits),
        },
    )
}

#[derive(Debug, Serialize)]
struct NeighborView {
    distance: f64,
    #[serde(flatten)]
    record: RecordSummary,
}

/// The `k` nearest records to `sha` over a comma-separated list of feature
/// groups (all groups when omitted).
async fn neighbors(State(state): State<Shared>, Query(q): Params) -> ApiResult {
    let snapshot = require(&state)?;
    let sha: String = required(&q, "sha")?;
    let k = param(&q, "k")?.unwrap_or(DEFAULT_K);
    let groups = q
        .get("groups")
        .map(|g| {
            g.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.parse::<FeatureGroup>())
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()
        .map_err(|e| ServiceError::BadRequest(format!("parameter groups: {e}")))?
        .unwrap_or_default();
    let found = snapshot.store.neighbors(&sha, &groups, k, state.config.exec)?;
    let view: Vec<NeighborView> = found
        .iter()
        .map(|n| NeighborView {
            distance: n.distance,
            record: RecordSummary::from(n.record),
        })
        .collect();
    respond(Some(&snapshot), view)
}

#[derive(Debug, Default, Serialize)]
struct Legend {
    #[serde(rename = "TP")]
    tp: usize,
    #[serde(rename = "FP")]
    fp: usize,
    #[serde(rename = "TN")]
    tn: usize,
    #[serde(rename = "FN")]
    fn_: usize,
}

#[derive(Debug, Serialize)]
struct VisualizationView {
    focus: ClassLabel,
    axis: FeatureGroup,
    legend: Legend,
    points: Vec<evidence_core::evidence::VisualizationPoint>,
}

/// Scatter data for a focus class: x from the chosen feature group, y the
/// focus-class probability, coloured by one-vs-rest outcome.
async fn visualization(State(state): State<Shared>, Query(q): Params) -> ApiResult {
    let snapshot = require(&state)?;
    let focus: ClassLabel = required(&q, "class")?;
    let axis: FeatureGroup = param(&q, "axis")?.unwrap_or(FeatureGroup::Amount);
    let points = snapshot.store.visualization_data(focus, axis)?;
    let mut legend = Legend::default();
    for p in &points {
        match p.outcome {
            Outcome::TruePositive => legend.tp += 1,
            Outcome::FalsePositive => legend.fp += 1,
            Outcome::TrueNegative => legend.tn += 1,
            Outcome::FalseNegative => legend.fn_ += 1,
        }
    }
    respond(
        Some(&snapshot),
        VisualizationView {
            focus,
            axis,
            legend,
            points,
        },
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIfRequest {
    sha: String,
    #[serde(default)]
    overrides: BTreeMap<String, serde_json::Value>,
}

/// Re-predicts a stored transaction with some attributes replaced. The store
/// is never modified.
async fn whatif(State(state): State<Shared>, body: Bytes) -> ApiResult {
    let snapshot = require(&state)?;
    let req: WhatIfRequest = parse_json(&body)?;
    let record = snapshot
        .store
        .get(&req.sha)
        .ok_or_else(|| ServiceError::NotFound(format!("unknown sha {}", req.sha)))?;
    let overrides = req
        .overrides
        .into_iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => Ok((k, s)),
            serde_json::Value::Number(n) => Ok((k, n.to_string())),
            other => Err(ServiceError::BadRequest(format!(
                "invalid value for {k}: expected a string or number, got {other}"
            ))),
        })
        .collect::<Result<BTreeMap<_, _>, _>>()?;
    let result = what_if(&snapshot.model, &snapshot.schema, &record.tx, &overrides)?;
    respond(Some(&snapshot), result)
}

#[derive(Debug, Serialize)]
struct ImportanceView<'a> {
    #[serde(flatten)]
    report: &'a ImportanceReport,
    ranking: Vec<FeatureGroup>,
}

/// Permutation importance over the labeled evidence; memoized per snapshot.
async fn importance(State(state): State<Shared>, Query(q): Params) -> ApiResult {
    let snapshot = require(&state)?;
    let repeats = param(&q, "repeats")?.unwrap_or(state.config.importance_repeats);
    let seed = param(&q, "seed")?.unwrap_or(state.config.seed);
    let metric: ImportanceMetric = param(&q, "metric")?.unwrap_or_default();
    let config = state.config.clone();
    let snap = snapshot.clone();
    let report = blocking(move || snap.importance(metric, repeats, seed, &config)).await?;
    respond(
        Some(&snapshot),
        ImportanceView {
            ranking: report.ranking(),
            report: &report,
        },
    )
}

/// Binds `addr`; a busy port is reported here, before anything is served.
pub async fn bind(addr: std::net::SocketAddr) -> Result<tokio::net::TcpListener, ServiceError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })
}

/// Serves on an already bound listener until interrupted.
pub async fn serve(listener: tokio::net::TcpListener, state: Shared) -> Result<(), ServiceError> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, "listening");
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}
