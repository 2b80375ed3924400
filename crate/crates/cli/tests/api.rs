use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tipping_cli::jobs::{Artifact, JobRecord, JobStatus};
use tipping_cli::server::{router, AppState, OPENAPI_JSON};
use tipping_cli::store::DataRoot;
use tipping_core::ModelParams;
use tower::ServiceExt;

fn app(root: &std::path::Path) -> (Router, AppState) {
    let state = AppState::new(DataRoot::new(root), ModelParams::default());
    (router(state.clone()), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&b))))
}

async fn wait_for(app: &Router, job: &str, limit: Duration) -> JobRecord {
    let start = Instant::now();
    let mut last = 0.0;
    loop {
        let (s, v) = call_json(app, "GET", &format!("/api/jobs/{job}"), None).await;
        assert_eq!(s, StatusCode::OK);
        let rec: JobRecord = serde_json::from_value(v).unwrap();
        assert!(rec.progress >= last, "progress went backwards");
        last = rec.progress;
        if rec.status.is_terminal() {
            return rec;
        }
        assert!(start.elapsed() < limit, "job {job} still {:?}", rec.status);
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    for uri in ["/api/jobs/job-424242", "/api/gan/runs/nope", "/api/gan/runs/nope/audit", "/api/gan/runs/nope/samples?n=5", "/api/datasets/nope", "/api/nothing"] {
        let (s, v) = call_json(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(v["code"], "not_found");
        assert!(v["message"].is_string() && v.get("detail").is_some());
    }
    let (s, _) = call_json(&app, "GET", "/api/datasets/bad%20id", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn ask_returns_the_example_programs() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let cases = [
        ("If Fwn is set to value 638758, does the AMOC collapse within 3000 years?", "ChangeSign(box_model(SetTo(Fwn,638758)),M_n)"),
        ("If M_ek is set to value 28496768, does the AMOC collapse within 3000 years?", "ChangeSign(box_model(SetTo(M_ek,28496768)),M_n)"),
        (
            "If Fwn is set to value 638758 and D_low0 is set to value 288, does the AMOC collapse within 3000 years?",
            "ChangeSign(box_model(SetTo(Fwn,638758),SetTo(D_low0,288)),M_n)",
        ),
    ];
    for (q, program) in cases {
        let (s, bytes) = call(&app, "POST", "/api/ask", Some(json!({ "question": q }))).await;
        assert_eq!(s, StatusCode::OK);
        let expected = tipping_cli::service::ask_json(q, &ModelParams::default()).unwrap();
        assert_eq!(String::from_utf8(bytes.clone()).unwrap(), expected);
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["program"], program);
        assert_eq!(v["question"], q);
        assert!(v["collapsed"].is_boolean());
        assert!(v["trace"].as_array().unwrap().len() > 100);
    }
}

#[tokio::test]
async fn dsl_errors_carry_positions() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let (s, v) = call_json(&app, "POST", "/api/translate", Some(json!({ "program": "ChangeSign(box_model(SetTo(Fwn 1)),M_n)" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "parse_error");
    assert_eq!(v["detail"]["position"], 31);
    let (s, v) = call_json(&app, "POST", "/api/translate", Some(json!({ "program": "ChangeSign(box_model(SetTo(Fwx,1)),M_n)" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["detail"]["suggestion"], "Fwn");
    let (s, v) = call_json(&app, "POST", "/api/ask", Some(json!({ "question": "Will it rain tomorrow?" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "unrecognized_template");
    let (s, v) = call_json(&app, "POST", "/api/ask", Some(json!({ "nope": 1 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "invalid_body");
    let (s, _) = call_json(&app, "POST", "/api/translate", Some(json!({}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn translate_both_directions() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let p = "ChangeSign(box_model(SetTo(M_ek,28496768)),M_n)";
    let (s, v) = call_json(&app, "POST", "/api/translate", Some(json!({ "program": p, "horizon_years": 500 }))).await;
    assert_eq!(s, StatusCode::OK);
    let q = v["question"].as_str().unwrap().to_string();
    assert_eq!(q, "If M_ek is set to value 28496768, does the AMOC collapse within 500 years?");
    let (_, v) = call_json(&app, "POST", "/api/translate", Some(json!({ "question": q }))).await;
    assert_eq!(v["program"], p);
    assert_eq!(v["horizon_years"], 500.0);
}

#[tokio::test]
async fn simulate_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let (s, v) = call_json(&app, "POST", "/api/simulate", Some(json!({ "fw_n": 1.5, "horizon_years": 1500 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["report"]["collapsed"], true);
    assert_eq!(v["csv"].as_str().unwrap().lines().count(), 1502);
    let (s, v) = call_json(&app, "POST", "/api/simulate", Some(json!({ "dt_years": -1 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");

    let sweep = json!({ "m_ek": 25, "d_low0": 400, "fwn_min": 0.05, "fwn_max": 1.55, "steps": 7, "tol": 0.05 });
    let (s, v) = call_json(&app, "POST", "/api/sweep", Some(sweep.clone())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["upward_csv"].as_str().unwrap().lines().count(), 8);
    assert!(v["svg"].as_str().unwrap().starts_with("<svg"));
    let c = v["summary"]["critical_collapse_fwn"].as_f64().unwrap();
    let r = v["summary"]["critical_recovery_fwn"].as_f64().unwrap();
    assert!(r <= c);

    let mut bg = sweep;
    bg["background"] = json!(true);
    let (s, v) = call_json(&app, "POST", "/api/sweep", Some(bg)).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let rec = wait_for(&app, v["id"].as_str().unwrap(), Duration::from_secs(300)).await;
    assert_eq!(rec.status, JobStatus::Done);
    assert_eq!(rec.artifacts.len(), 4);
    assert!(rec.artifacts.iter().all(|a: &Artifact| a.verify(dir.path())));
    assert_eq!(rec.result.unwrap()["summary"]["critical_collapse_fwn"].as_f64().unwrap(), c);
}

#[tokio::test]
async fn train_job_then_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let ds = json!({ "id": "small", "n": 160, "seed": 5, "train_frac": 0.75, "split_seed": 2 });
    let (s, v) = call_json(&app, "POST", "/api/datasets", Some(ds.clone())).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["kind"], "dataset");
    let rec = wait_for(&app, v["id"].as_str().unwrap(), Duration::from_secs(120)).await;
    assert_eq!(rec.status, JobStatus::Done, "{:?}", rec.error);
    assert_eq!(rec.artifacts.len(), 6);
    assert!(rec.artifacts.iter().all(|a| a.verify(dir.path())));
    let (s, _) = call_json(&app, "POST", "/api/datasets", Some(ds)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, info) = call_json(&app, "GET", "/api/datasets/small", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(info["all"]["n_total"], 160);
    assert_eq!(info["train"]["n_total"], 120);

    let body = json!({ "run_id": "r1", "dataset_id": "small", "config": { "n_generators": 1, "epochs": 4, "seed": 3 } });
    let (s, v) = call_json(&app, "POST", "/api/gan/train", Some(body.clone())).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(v["kind"], "gan-train");
    assert_eq!(v["status"], "queued");
    let (s, _) = call_json(&app, "POST", "/api/gan/train", Some(body.clone())).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let rec = wait_for(&app, v["id"].as_str().unwrap(), Duration::from_secs(300)).await;
    assert_eq!(rec.status, JobStatus::Done, "{:?}", rec.error);
    assert_eq!(rec.progress, 1.0);
    assert_eq!(rec.artifacts.len(), 5);
    assert!(rec.artifacts.iter().all(|a| a.verify(dir.path())));
    let (s, _) = call_json(&app, "POST", "/api/gan/train", Some(body)).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, m) = call_json(&app, "GET", "/api/gan/runs/r1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(m["config"]["epochs"], 4);
    assert_eq!(m["history"].as_array().unwrap().len(), 4);
    let (_, list) = call_json(&app, "GET", "/api/gan/runs", None).await;
    assert_eq!(list["runs"], json!(["r1"]));

    let (s, _) = call_json(&app, "GET", "/api/gan/runs/r1/audit", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, out) = call_json(&app, "GET", "/api/gan/runs/r1/samples?n=500", None).await;
    assert_eq!(s, StatusCode::OK);
    let samples = out["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 500);
    assert_eq!(out["programs"].as_array().unwrap().len(), 500);
    let n_col = samples.iter().filter(|s| s["collapsed"] == true).count();
    let g = &out["audit"]["per_generator"][0];
    assert_eq!(g["n_sampled"], 500);
    assert_eq!(g["n_collapsed"], n_col);
    assert_eq!(g["collapse_fraction"].as_f64().unwrap(), n_col as f64 / 500.0);
    let (s, audit) = call_json(&app, "GET", "/api/gan/runs/r1/audit", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(audit, out["audit"]);
    assert!(dir.path().join("runs/r1/samples.csv").is_file());
    let (s, _) = call_json(&app, "GET", "/api/gan/runs/r1/samples?n=0", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&app, "GET", "/api/gan/runs/r1/samples?n=abc", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (_, jobs) = call_json(&app, "GET", "/api/jobs", None).await;
    assert_eq!(jobs["jobs"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn openapi_document_lists_every_route() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let (s, v) = call_json(&app, "GET", "/api/openapi.json", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, serde_json::from_str::<Value>(OPENAPI_JSON).unwrap());
    let paths = v["paths"].as_object().unwrap();
    for p in [
        "/api/simulate", "/api/sweep", "/api/ask", "/api/translate", "/api/datasets", "/api/datasets/{id}", "/api/gan/train",
        "/api/gan/runs", "/api/gan/runs/{id}", "/api/gan/runs/{id}/audit", "/api/gan/runs/{id}/samples", "/api/jobs",
        "/api/jobs/{id}", "/api/openapi.json",
    ] {
        assert!(paths.contains_key(p), "{p}");
    }
}
