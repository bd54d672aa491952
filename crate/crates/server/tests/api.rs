use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use trustlab::policy::{PolicyConfig, PolicyKind};
use trustlab::service::{AssistantSource, ConditionConfig, ManualClock, Payment, ProblemPool, StudyConfig, StudyService};
use trustlab_server::router;

fn config(kinds: &[PolicyKind], length: usize) -> StudyConfig {
    StudyConfig {
        study_id: "api".into(),
        task: "ArcC".into(),
        conditions: kinds
            .iter()
            .enumerate()
            .map(|(i, k)| ConditionConfig {
                condition_id: format!("c{i}"),
                policy: PolicyConfig::new(*k),
                assistant: AssistantSource::Simulated {
                    pool: ProblemPool::Arc,
                    profile: trustlab::assistant::AssistantKind::Calibrated,
                    n_sequences: 10,
                    length,
                    seed: 1,
                },
                reading_gate_ms: 10_000,
            })
            .collect(),
        target_per_condition: 30,
        payment: Payment {
            base_cents: 100,
            per_correct_cents: 10,
        },
        min_initial_accuracy: 0.35,
        seed: 5,
        snapshot_every: 0,
    }
}

fn app(kinds: &[PolicyKind], length: usize) -> (Router, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(1_000));
    let svc = StudyService::in_memory(config(kinds, length), Path::new("."), clock.clone()).unwrap();
    (router(Arc::new(svc)), clock)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn export_text(app: &Router) -> String {
    let resp = app.clone().oneshot(Request::get("/export").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap()
}

/// Posts `body` to `uri`, advancing the clock past any closed gate.
async fn post_when_open(app: &Router, clock: &ManualClock, uri: &str, body: Value) -> Value {
    loop {
        let (status, v) = call(app, "POST", uri, Some(body.clone())).await;
        match status {
            StatusCode::OK => return v,
            StatusCode::CONFLICT if v["error"] == "gate_closed" => clock.advance(v["remaining_ms"].as_u64().unwrap().max(1)),
            _ => panic!("{uri}: {status} {v}"),
        }
    }
}

async fn play_session(app: &Router, clock: &ManualClock, sid: &str, trust: i64) {
    loop {
        let (_, p) = call(app, "GET", &format!("/sessions/{sid}/progress"), None).await;
        let (step, body) = match p["stage"].as_str().unwrap() {
            "finished" => break,
            "awaiting_initial" => ("initial", json!({"decision": 0})),
            "awaiting_reveal" | "awaiting_final" => ("final", json!({"decision": 0})),
            _ => ("trust", json!({"trust": trust})),
        };
        post_when_open(app, clock, &format!("/sessions/{sid}/{step}"), body).await;
    }
}

#[tokio::test]
async fn full_session_over_http() {
    let (app, clock) = app(&[PolicyKind::ThinkingAdaptive], 5);
    let (status, e) = call(&app, "POST", "/sessions", Some(json!({"user_id": "alice"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let sid = e["session_id"].as_str().unwrap().to_string();
    assert_eq!(e["planned_length"], 5);

    let (status, p) = call(&app, "GET", &format!("/sessions/{sid}/problem"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(p["index"], 0);
    assert_eq!(p["reading_gate_remaining_ms"], 10_000);
    assert!(p.get("correct_index").is_none());

    clock.advance(4_000);
    let (status, err) = call(&app, "POST", &format!("/sessions/{sid}/initial"), Some(json!({"decision": 0}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "gate_closed");
    assert_eq!(err["remaining_ms"], 6_000);

    let (status, err) = call(&app, "POST", &format!("/sessions/{sid}/final"), Some(json!({"decision": 0}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "wrong_stage");

    clock.advance(6_000);
    post_when_open(&app, &clock, &format!("/sessions/{sid}/initial"), json!({"decision": 1})).await;
    let (_, advice) = call(&app, "GET", &format!("/sessions/{sid}/advice"), None).await;
    assert_eq!(advice["status"], "ready");
    let fb = post_when_open(&app, &clock, &format!("/sessions/{sid}/final"), json!({"decision": 1})).await;
    assert!(fb.get("ai_correct").is_some());
    post_when_open(&app, &clock, &format!("/sessions/{sid}/trust"), json!({"trust": 2})).await;

    // Low trust: the next round embargoes the advice behind "thinking".
    clock.advance(10_000);
    post_when_open(&app, &clock, &format!("/sessions/{sid}/initial"), json!({"decision": 0})).await;
    let (_, advice) = call(&app, "GET", &format!("/sessions/{sid}/advice"), None).await;
    assert_eq!(advice["status"], "thinking");
    assert_eq!(advice["remaining_ms"], 10_000);

    let (status, err) = call(&app, "POST", &format!("/sessions/{sid}/finalize"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "not_finished");

    play_session(&app, &clock, &sid, 2).await;
    let (status, s) = call(&app, "POST", &format!("/sessions/{sid}/finalize"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["rounds"], 5);
    assert_eq!(s["total_cents"], 100 + 10 * s["correct_finals"].as_u64().unwrap());

    let records = trustlab::service::import_jsonl(&export_text(&app).await).unwrap();
    assert_eq!(records.len(), 1);
    assert!(records[0].complete);
    assert_eq!(records[0].session.interactions.len(), 5);
}

#[tokio::test]
async fn error_codes() {
    let (app, clock) = app(&[PolicyKind::NoIntervention], 3);
    let (status, err) = call(&app, "GET", "/sessions/nope/problem", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "unknown_session");

    let (_, e) = call(&app, "POST", "/sessions", Some(json!({"user_id": "bob"}))).await;
    let (status, err) = call(&app, "POST", "/sessions", Some(json!({"user_id": "bob"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "already_enrolled");

    let sid = e["session_id"].as_str().unwrap();
    clock.advance(10_000);
    let (status, err) = call(&app, "POST", &format!("/sessions/{sid}/initial"), Some(json!({"decision": 7}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{err}");

    let (status, _) = call(&app, "POST", &format!("/sessions/{sid}/events"), Some(json!({"name": "blur", "detail": {"ms": 3}}))).await;
    assert_eq!(status, StatusCode::NO_CONTENT);

    let (status, err) = call(&app, "POST", "/sessions", Some(json!({"name": 1}))).await;
    assert!(status.is_client_error());
    assert_eq!(err["error"], "bad_request");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_participants() {
    let (app, clock) = app(&[PolicyKind::NoIntervention, PolicyKind::BothAdaptive, PolicyKind::PauseAdaptive], 6);
    let mut tasks = Vec::new();
    for u in 0..45 {
        let app = app.clone();
        let clock = clock.clone();
        tasks.push(tokio::spawn(async move {
            let (status, e) = call(&app, "POST", "/sessions", Some(json!({"user_id": format!("u{u}")}))).await;
            assert_eq!(status, StatusCode::CREATED);
            let sid = e["session_id"].as_str().unwrap().to_string();
            play_session(&app, &clock, &sid, (u % 11) as i64).await;
            let (status, _) = call(&app, "POST", &format!("/sessions/{sid}/finalize"), None).await;
            assert_eq!(status, StatusCode::OK);
            sid
        }));
    }
    let mut ids = Vec::new();
    for t in tasks {
        ids.push(t.await.unwrap());
    }
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 45);
    let (_, study) = call(&app, "GET", "/study", None).await;
    for c in ["c0", "c1", "c2"] {
        assert_eq!(study["conditions"][c], 15);
    }
    let records = trustlab::service::import_jsonl(&export_text(&app).await).unwrap();
    assert_eq!(records.len(), 45);
    assert!(records.iter().all(|r| r.complete && r.settlement.is_some() && r.session.interactions.len() == 6));
}

#[test]
fn data_dir_survives_restart_over_a_real_socket() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0));
    let cfg = config(&[PolicyKind::NoIntervention], 4);
    let rt = tokio::runtime::Runtime::new().unwrap();

    let start = |clock: Arc<ManualClock>| {
        let svc = Arc::new(StudyService::open(cfg.clone(), Path::new("."), dir.path(), clock).unwrap());
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = rt.spawn(async move { axum::serve(listener, router(svc)).await });
        (format!("http://{addr}"), handle)
    };

    let (url, handle) = start(clock.clone());
    let http = reqwest::blocking::Client::new();
    let e: Value = http.post(format!("{url}/sessions")).json(&json!({"user_id": "carol"})).send().unwrap().json().unwrap();
    let sid = e["session_id"].as_str().unwrap().to_string();
    clock.advance(10_000);
    let r = http.post(format!("{url}/sessions/{sid}/initial")).json(&json!({"decision": 1})).send().unwrap();
    assert_eq!(r.status(), reqwest::StatusCode::OK);
    handle.abort();

    let (url, handle) = start(clock.clone());
    let p: Value = http.get(format!("{url}/sessions/{sid}/progress")).send().unwrap().json().unwrap();
    assert_eq!(p["stage"], "awaiting_final");
    let r = http.post(format!("{url}/sessions")).json(&json!({"user_id": "carol"})).send().unwrap();
    assert_eq!(r.status(), reqwest::StatusCode::CONFLICT);
    handle.abort();
}
