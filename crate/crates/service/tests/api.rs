mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::{get, post, reference_state};
use evidence_core::fixtures::LISTING_1;
use evidence_service::{ServiceConfig, SessionState};
use serde_json::Value;

fn scratch() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn shas(list: &Value) -> Vec<&str> {
    list.as_array()
        .unwrap()
        .iter()
        .map(|r| r["sha"].as_str().unwrap())
        .collect()
}

#[tokio::test]
async fn metrics_report_four_of_nine() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, body) = get(&state, "/metrics").await;
    assert_eq!(status, StatusCode::OK);
    let data = &body["data"];
    assert_eq!(data["correct"], 4);
    assert_eq!(data["incorrect"], 5);
    assert_eq!(
        data["evaluation"]["overall_accuracy"].as_f64().unwrap(),
        4.0 / 9.0
    );
}

#[tokio::test]
async fn every_response_names_model_and_schema() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let model_id = state.snapshot().unwrap().model_id().to_string();
    for uri in [
        "/metrics",
        "/metrics?class=FUNDING",
        "/transactions",
        "/transactions/REF_01",
        "/search?term=deposit",
        "/neighbors?sha=REF_01",
        "/visualization?class=FUNDING",
    ] {
        let (status, body) = get(&state, uri).await;
        assert_eq!(status, StatusCode::OK, "{uri}: {body}");
        assert_eq!(body["model_id"], model_id.as_str(), "{uri}");
        assert_eq!(body["schema_version"], 1, "{uri}");
    }
}

#[tokio::test]
async fn class_metrics_slice() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (_, body) = get(&state, "/metrics?class=FUNDING").await;
    let class = &body["data"]["class"];
    assert_eq!(class["label"], "FUNDING");
    assert_eq!(class["precision"].as_f64().unwrap(), 1.0);
    assert_eq!(class["recall"].as_f64().unwrap(), 0.75);
    assert!(body["data"].get("evaluation").is_none());

    let (status, body) = get(&state, "/metrics?class=SAVINGS").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("SAVINGS"));
}

#[tokio::test]
async fn income_cash_incorrect_has_three_records() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, body) = get(&state, "/transactions?class=INCOME_CASH&correct=false").await;
    assert_eq!(status, StatusCode::OK);
    let data = &body["data"];
    assert_eq!(shas(&data["incorrect"]), ["REF_04", "REF_05", "REF_09"]);
    assert!(data["correct"].as_array().unwrap().is_empty());
    assert_eq!(data["metrics"]["label"], "INCOME_CASH");
}

#[tokio::test]
async fn unfiltered_transactions_cover_the_store() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (_, body) = get(&state, "/transactions").await;
    let data = &body["data"];
    assert_eq!(data["correct"].as_array().unwrap().len(), 4);
    assert_eq!(data["incorrect"].as_array().unwrap().len(), 5);
    let (_, body) = get(&state, "/transactions?correct=true").await;
    assert_eq!(
        shas(&body["data"]["correct"]),
        ["REF_01", "REF_02", "REF_03", "REF_06"]
    );
    assert!(body["data"]["incorrect"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn detail_and_unknown_sha() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, body) = get(&state, "/transactions/REF_07").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["data"]["correct"], false);
    assert_eq!(body["data"]["record"]["actual"], "FUNDING");
    assert_eq!(body["data"]["record"]["prediction"]["final"], "OTHER");

    let (status, body) = get(&state, "/transactions/NOPE").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("NOPE"));
}

#[tokio::test]
async fn visualization_shows_one_funding_false_negative() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, body) = get(&state, "/visualization?class=FUNDING&axis=amount").await;
    assert_eq!(status, StatusCode::OK);
    let legend = &body["data"]["legend"];
    assert_eq!(legend["FN"], 1);
    assert_eq!(legend["TP"], 3);
    assert_eq!(legend["FP"], 0);
    assert_eq!(legend["TN"], 5);
    let fns: Vec<&str> = body["data"]["points"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["outcome"] == "FN")
        .map(|p| p["sha"].as_str().unwrap())
        .collect();
    assert_eq!(fns, ["REF_07"]);

    let (status, _) = get(&state, "/visualization").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = get(&state, "/visualization?class=FUNDING&axis=colour").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn search_modes() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (_, body) = get(&state, "/search?term=funding&match=contains").await;
    let data = &body["data"];
    assert_eq!(shas(&data["correct"]), ["REF_02", "REF_03", "REF_06"]);
    assert_eq!(shas(&data["incorrect"]), ["REF_07"]);
    assert_eq!(data["match"], "contains");

    let (_, body) = get(&state, "/search?term=funding&match=exact").await;
    assert!(body["data"]["correct"].as_array().unwrap().is_empty());
    assert!(body["data"]["incorrect"].as_array().unwrap().is_empty());

    let (status, _) = get(&state, "/search?term=%20").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = get(&state, "/search?term=x&match=fuzzy").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn neighbors_over_selected_groups() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, body) = get(&state, "/neighbors?sha=REF_02&groups=text,amount&k=3").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let rows = body["data"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["sha"] != "REF_02"));
    let d: Vec<f64> = rows.iter().map(|r| r["distance"].as_f64().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));

    let (status, _) = get(&state, "/neighbors?sha=REF_02&k=0").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = get(&state, "/neighbors?sha=REF_02&groups=shoe").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = get(&state, "/neighbors?sha=NOPE").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get(&state, "/neighbors").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn whatif_with_no_overrides_is_a_zero_delta() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, body) = post(&state, "/whatif", r#"{"sha":"REF_01","overrides":{}}"#).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let delta = body["data"]["delta"].as_object().unwrap();
    assert_eq!(delta.len(), 5);
    assert!(delta.values().all(|v| v.as_f64().unwrap() == 0.0));
    assert_eq!(body["data"]["baseline"], body["data"]["modified"]);
}

#[tokio::test]
async fn whatif_never_touches_the_store() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let before = state.snapshot().unwrap();
    let (status, body) = post(
        &state,
        "/whatif",
        r#"{"sha":"REF_04","overrides":{"description":"LOAN ADVANCE FUNDING","amount":90000}}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let notes = body["data"]["notes"].as_array().unwrap();
    assert!(notes.iter().any(|n| n.as_str().unwrap().contains("clamped")));
    let after = state.snapshot().unwrap();
    assert!(Arc::ptr_eq(&before, &after));
    assert_eq!(
        after.store.get("REF_04").unwrap().tx.raw.description,
        "CASH DEPOSIT INVOICE 1182"
    );
}

#[tokio::test]
async fn whatif_errors() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, body) = post(
        &state,
        "/whatif",
        r#"{"sha":"REF_01","overrides":{"colour":"red"}}"#,
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], r#"unknown override field "colour""#);
    let (status, body) = post(
        &state,
        "/whatif",
        r#"{"sha":"REF_01","overrides":{"amount":"lots"}}"#,
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"]
        .as_str()
        .unwrap()
        .starts_with("invalid value for amount"));
    let (status, _) = post(&state, "/whatif", r#"{"sha":"NOPE"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = post(&state, "/whatif", "not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn classify_emits_both_output_documents() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, body) = post(&state, "/classify", LISTING_1).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let finals = body["data"]["final"]["Transactions"].as_array().unwrap();
    assert_eq!(finals.len(), 4);
    let keys: Vec<&String> = finals[0].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["FinalClassification", "Sha"]);
    let probs = body["data"]["probabilities"]["Transactions"].as_array().unwrap();
    let rec = probs[0].as_object().unwrap();
    for k in [
        "Sha",
        "funding",
        "income_invoice",
        "income_cash",
        "income_cheque",
        "other",
    ] {
        assert!(rec.contains_key(k), "missing {k}");
    }
    let total: f64 = rec
        .iter()
        .filter(|(k, _)| *k != "Sha")
        .map(|(_, v)| v.as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);

    // Classification stores nothing.
    assert_eq!(state.snapshot().unwrap().store.len(), 9);

    let (status, body) = post(
        &state,
        "/classify",
        r#"{"transactions":[{"Sha":"Q1","Date":"2020-03-02","Amount":25000,"Description":"LOAN ADVANCE","Bank":"NAB"}]}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["data"]["final"]["Transactions"][0]["Sha"], "Q1");
}

#[tokio::test]
async fn ingest_adds_unlabeled_evidence_and_is_idempotent() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, body) = post(&state, "/ingest", LISTING_1).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["data"]["accepted"].as_array().unwrap().len(), 4);
    assert_eq!(body["data"]["final"]["Transactions"].as_array().unwrap().len(), 4);
    let snap = state.snapshot().unwrap();
    assert_eq!(snap.store.len(), 13);
    assert!(dir.path().join("transactions.jsonl").is_file());
    assert!(dir.path().join("evidence.jsonl").is_file());

    let (_, body) = get(&state, "/metrics").await;
    assert_eq!(body["data"]["labeled"], 9);
    assert_eq!(body["data"]["records"], 13);
    let (_, body) = get(&state, "/transactions/SHA_0003").await;
    assert_eq!(body["data"]["correct"], Value::Null);

    let (status, body) = post(&state, "/ingest", LISTING_1).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["data"]["accepted"].as_array().unwrap().is_empty());
    assert_eq!(body["data"]["duplicates"].as_array().unwrap().len(), 4);
    assert_eq!(state.snapshot().unwrap().store.len(), 13);

    let conflicting = LISTING_1.replace("7.47", "8.47");
    let (status, body) = post(&state, "/ingest", &conflicting).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(body["error"].as_str().unwrap().contains("SHA_0001"));
}

#[tokio::test]
async fn malformed_ingest_is_rejected() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, body) = post(&state, "/ingest", r#"{"ApplicationId": "1", "BankAccounts": []}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].is_string());
    assert!(!dir.path().join("transactions.jsonl").exists());
}

#[tokio::test]
async fn importance_is_memoized() {
    let dir = scratch();
    let state = reference_state(dir.path());
    let (status, first) = get(&state, "/importance?repeats=2&seed=7&metric=accuracy").await;
    assert_eq!(status, StatusCode::OK, "{first}");
    assert_eq!(first["data"]["ranking"].as_array().unwrap().len(), 7);
    assert_eq!(first["data"]["groups"].as_array().unwrap().len(), 7);
    let (_, second) = get(&state, "/importance?repeats=2&seed=7&metric=accuracy").await;
    assert_eq!(first, second);
    let (status, _) = get(&state, "/importance?metric=auc").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn endpoints_without_a_model_conflict() {
    let dir = scratch();
    let state = Arc::new(SessionState::new(
        ServiceConfig::default().with_data_dir(dir.path()),
        None,
    ));
    let (status, body) = get(&state, "/metrics").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(body["error"].as_str().unwrap().contains("no model"));

    let (status, body) = post(&state, "/train", "").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(
        body["error"].as_str().unwrap().starts_with("stage featurize"),
        "{body}"
    );

    let (status, body) = post(&state, "/ingest", LISTING_1).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["model_id"], Value::Null);
    assert_eq!(body["data"]["accepted"].as_array().unwrap().len(), 4);

    let (status, _) = post(&state, "/train", r#"{"sigma": -1}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&state, "/train", r#"{"bogus": 1}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}
