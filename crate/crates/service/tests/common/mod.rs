#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use evidence_core::evidence::EvidenceStore;
use evidence_core::fixtures::reference_fixture;
use evidence_core::Execution;
use evidence_service::{api, ServiceConfig, SessionState, Snapshot};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

/// Session over the nine-row scored fixture, backed by a scratch data dir.
pub fn reference_state(dir: &std::path::Path) -> Arc<SessionState> {
    let f = reference_fixture();
    let store = EvidenceStore::load_join(f.transactions, f.features, f.predictions, f.actuals).unwrap();
    let snapshot = Snapshot::new(f.schema, f.model, store, Execution::Sequential).unwrap();
    let config = ServiceConfig::default().with_data_dir(dir);
    Arc::new(SessionState::new(config, Some(snapshot)))
}

pub async fn call(state: &Arc<SessionState>, method: &str, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = api::router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

pub async fn get(state: &Arc<SessionState>, uri: &str) -> (StatusCode, Value) {
    call(state, "GET", uri, "").await
}

pub async fn post(state: &Arc<SessionState>, uri: &str, body: &str) -> (StatusCode, Value) {
    call(state, "POST", uri, body).await
}
