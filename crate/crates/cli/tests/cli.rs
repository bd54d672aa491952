use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use trustlab::service::{read_records, ManualClock, StudyConfig, StudyService};

fn trustlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trustlab"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("TRUSTLAB_DATA_DIR")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn simulate_is_counted_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b", "c"] {
        let seed = if out == "c" { "43" } else { "42" };
        ok(&trustlab(dir.path(), &["simulate", "--preset", "ArcC", "--users", "30", "--seed", seed, "--out-dir", out]));
    }
    let records = read_records(&dir.path().join("a/sessions.jsonl")).unwrap();
    assert_eq!(records.len(), 90);
    assert_eq!(records.iter().map(|r| r.session.interactions.len()).sum::<usize>(), 2700);
    let conditions: std::collections::BTreeSet<_> = records.iter().map(|r| r.session.condition_id.clone()).collect();
    assert_eq!(conditions.len(), 3);
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/sessions.jsonl"), read("b/sessions.jsonl"));
    assert_eq!(read("a/events.jsonl"), read("b/events.jsonl"));
    assert_ne!(read("a/sessions.jsonl"), read("c/sessions.jsonl"));
}

#[test]
fn simulate_refuses_without_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = trustlab(dir.path(), &["simulate", "--preset", "ArcC"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    assert!(!dir.path().join("sessions.jsonl").exists());
}

#[test]
fn usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"study_id": "x", "task": "ArcC", "conditions": [{"condition_id": "a", "policy": {"kind": "sometimes"}}]}"#).unwrap();
    let out = trustlab(dir.path(), &["simulate", "--config", "bad.json", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("conditions[0].policy.kind") && err.contains("line 1"), "{err}");

    assert_eq!(trustlab(dir.path(), &["analyze", "missing.jsonl"]).status.code(), Some(1));
    std::fs::write(dir.path().join("garbage.jsonl"), "{\"session\": 3}\n").unwrap();
    assert_eq!(trustlab(dir.path(), &["analyze", "garbage.jsonl"]).status.code(), Some(1));
    assert_eq!(trustlab(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(trustlab(dir.path(), &["gen-sequences", "--preset", "Nope", "--seed", "1"]).status.code(), Some(2));
}

#[test]
fn gen_sequences_arcc_preset() {
    let dir = tempfile::tempdir().unwrap();
    ok(&trustlab(dir.path(), &["gen-sequences", "--preset", "ArcC", "--seed", "9", "--out-dir", "x"]));
    ok(&trustlab(dir.path(), &["gen-sequences", "--preset", "ArcC", "--seed", "9", "--out-dir", "y"]));
    let seqs = lines(&dir.path().join("x/sequences.jsonl"));
    assert_eq!(seqs.len(), 10);
    for s in &seqs {
        assert_eq!(s["items"].as_array().unwrap().len(), 30);
    }
    assert_eq!(
        std::fs::read(dir.path().join("x/sequences.jsonl")).unwrap(),
        std::fs::read(dir.path().join("y/sequences.jsonl")).unwrap()
    );
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("x/sequences_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_sequences"], 10);
    assert_eq!(summary["calibration"]["bins"].as_array().unwrap().len(), 9);
}

/// Two-option interaction whose correct answer is option 0.
fn interaction(index: usize, ai_correct: bool, initial: usize, final_: usize, trust: u8) -> Value {
    json!({
        "index": index,
        "problem_id": format!("p{index}"),
        "num_options": 2,
        "correct_index": 0,
        "recommendation": {"prediction_index": if ai_correct { 0 } else { 1 }, "confidence": 0.7},
        "initial_decision": initial,
        "final_decision": final_,
        "trust_report": trust,
        "intervention": "none",
        "timestamps": {"problem_shown": 0, "initial_submitted": 0, "advice_shown": 0, "final_submitted": 0, "trust_submitted": 0}
    })
}

#[test]
fn analyze_hand_written_log() {
    let dir = tempfile::tempdir().unwrap();
    // After a lead-in round, four disagreements at prior trust 5: AI right
    // and taken, AI right and ignored, AI wrong and taken, AI wrong and
    // ignored. Then one agreement, which is not analyzed.
    let rounds = vec![
        interaction(0, true, 0, 0, 5),
        interaction(1, true, 1, 0, 5),
        interaction(2, true, 1, 1, 5),
        interaction(3, false, 0, 1, 5),
        interaction(4, false, 0, 0, 5),
        interaction(5, true, 0, 0, 5),
    ];
    let session = json!({
        "session_id": "s1", "user_id": "u1", "condition_id": "control", "sequence_id": "q",
        "assistant_profile_id": "calibrated", "planned_length": 6, "interactions": rounds
    });
    std::fs::write(dir.path().join("log.jsonl"), format!("{session}\n")).unwrap();
    ok(&trustlab(dir.path(), &["analyze", "log.jsonl", "--seed", "1", "--resamples", "100"]));
    let csv = std::fs::read_to_string(dir.path().join("reliance.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "condition,window,n,switch_rate,under_reliance,over_reliance,total_inappropriate,final_accuracy");
    assert_eq!(rows[1], "control,all,4,0.500000,0.500000,0.500000,1.000000,0.500000");
    assert_eq!(rows[2], "control,low,0,,,,,");
    assert_eq!(rows[3], "control,high,0,,,,,");
    let binned = std::fs::read_to_string(dir.path().join("trust_binned.csv")).unwrap();
    assert!(binned.lines().any(|l| l == "5,4,2,2,0.500000,0.500000,0.500000,1.000000,0.500000"), "{binned}");
    for f in ["report.json", "macro.csv", "bootstrap.csv", "plot_trust.dat", "plot_conditions.dat", "plot.gp"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["sessions"], 1);
}

#[test]
fn analyze_simulated_study_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    ok(&trustlab(dir.path(), &["simulate", "--preset", "ArcC", "--users", "12", "--seed", "5"]));
    for out in ["r1", "r2"] {
        ok(&trustlab(dir.path(), &["analyze", "sessions.jsonl", "--seed", "2", "--resamples", "500", "--out-dir", out]));
    }
    for f in ["reliance.csv", "bootstrap.csv", "macro.csv", "report.json", "plot_conditions.dat"] {
        assert_eq!(std::fs::read(dir.path().join("r1").join(f)).unwrap(), std::fs::read(dir.path().join("r2").join(f)).unwrap(), "{f}");
    }
    let boot = std::fs::read_to_string(dir.path().join("r1/bootstrap.csv")).unwrap();
    assert!(boot.lines().any(|l| l.starts_with("explanations,control,all,total_inappropriate,")));
}

#[test]
fn fit_and_eval_trust() {
    let dir = tempfile::tempdir().unwrap();
    ok(&trustlab(dir.path(), &["simulate", "--preset", "ArcC", "--users", "25", "--seed", "11"]));
    let out = trustlab(dir.path(), &["fit-trust", "sessions.jsonl", "--train", "45"]);
    assert_eq!(out.status.code(), Some(2), "a split needs a seed");
    ok(&trustlab(dir.path(), &["fit-trust", "sessions.jsonl", "--train", "45", "--seed", "3"]));
    assert_eq!(lines(&dir.path().join("train.jsonl")).len(), 45);
    assert_eq!(lines(&dir.path().join("test.jsonl")).len(), 30);
    ok(&trustlab(dir.path(), &["eval-trust", "test.jsonl", "--model", "trust_model.json"]));
    let csv = std::fs::read_to_string(dir.path().join("trust_eval.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 6);
    for r in &rows[1..] {
        assert_eq!(r.split(',').nth(2), Some("900"), "{r}");
    }
}

#[test]
fn export_replays_a_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let clock = Arc::new(ManualClock::new(0));
    {
        let svc = StudyService::open(StudyConfig::preset("ArcC").unwrap(), Path::new("."), &data, clock.clone()).unwrap();
        let e = svc.create_session("dana").unwrap();
        clock.advance(10_000);
        svc.post_initial(&e.session_id, 0).unwrap();
        svc.create_session("eli").unwrap();
    }
    ok(&trustlab(dir.path(), &["export", "--preset", "ArcC", "--data-dir", "data", "--out-dir", "out"]));
    let records = lines(&dir.path().join("out/export.jsonl"));
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r["complete"] == false && r["schema_version"] == 1));
    assert_eq!(trustlab(dir.path(), &["export", "--preset", "ArcC"]).status.code(), Some(2));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http(port: u16, request: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.write_all(request.as_bytes()).ok()?;
    let mut out = String::new();
    s.read_to_string(&mut out).ok()?;
    Some(out)
}

#[test]
fn serve_answers_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_trustlab"))
        .args(["serve", "--preset", "DiagC", "--port", &port.to_string()])
        .env("TRUSTLAB_DATA_DIR", dir.path())
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let study = loop {
        if let Some(r) = http(port, "GET /study HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(study.starts_with("HTTP/1.1 200"), "{study}");
    assert!(study.contains("\"task\":\"DiagC\""));
    let body = r#"{"user_id":"frank"}"#;
    let created = http(
        port,
        &format!("POST /sessions HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len()),
    )
    .unwrap();
    assert!(created.starts_with("HTTP/1.1 201"), "{created}");
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(dir.path().join(trustlab::service::LOG_FILE).exists());
}
