mod common;

use std::fs;
use std::sync::Arc;

use medconsult::clock::{SequentialIds, StepClock};
use medconsult::http::AppState;
use medconsult::index_store;
use medconsult::{Service, ServiceParts};
use medconsult_core::genbackend::{BackendError, GenerationRequest, GenerationResult, Generator, HealthStatus, ScriptedBackend};
use serde_json::{json, Value};

struct Failing;

impl Generator for Failing {
    fn backend_id(&self) -> &str {
        "failing"
    }
    fn generate(&self, _: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        Err(BackendError::Failure { status: Some(503), body: "overloaded".into() })
    }
    fn health_check(&self) -> HealthStatus {
        HealthStatus::Unreachable { cause: "down".into(), status: Some(503) }
    }
}

fn state(backend: Arc<dyn Generator>) -> AppState {
    let f = common::fixtures();
    let kb = index_store::build_from_files(&f.join("demo_docs.jsonl"), &f.join("aliases.tsv")).unwrap();
    let mut parts = ServiceParts::new(kb, backend);
    parts.ids = Arc::new(SequentialIds::new("s"));
    parts.clock = Arc::new(StepClock::new(0, 1));
    AppState {
        service: Arc::new(Service::new(parts).unwrap()),
        admin_token: Some("tok".into()),
        default_docs: Some(f.join("demo_docs.jsonl")),
        default_aliases: Some(f.join("aliases.tsv")),
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::new_with_config(ureq::Agent::config_builder().http_status_as_error(false).build())
}

fn call(method: &str, url: &str, body: Option<Value>, token: Option<&str>) -> (u16, Value) {
    let a = agent();
    let resp = match method {
        "GET" => a.get(url).call(),
        _ => {
            let mut req = a.post(url);
            if let Some(t) = token {
                req = req.header("Authorization", format!("Bearer {t}"));
            }
            match body {
                Some(b) => req.send_json(b),
                None => req.send_empty(),
            }
        }
    };
    let mut resp = resp.unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

#[test]
fn session_lifecycle() {
    let base = common::spawn_http(state(Arc::new(ScriptedBackend::new(["Rest well and drink plenty of fluids, take care."]).unwrap())));
    let (st, v) = call("POST", &format!("{base}/sessions"), None, None);
    assert_eq!(st, 201);
    let id = v["session_id"].as_str().unwrap().to_string();

    let (st, v) = call("GET", &format!("{base}/sessions/{id}"), None, None);
    assert_eq!(st, 200);
    assert_eq!(v["turns"].as_array().unwrap().len(), 0);

    let (st, turn) = call("POST", &format!("{base}/sessions/{id}/messages"), Some(json!({"text": "I have a fever today"})), None);
    assert_eq!(st, 200, "{turn}");
    assert_eq!(turn["terms"], json!(["FEVER"]));
    for d in turn["retrieved"].as_array().unwrap() {
        assert!(d["doc_id"].as_str().unwrap().starts_with("doc-"));
    }

    let (_, v) = call("GET", &format!("{base}/sessions/{id}"), None, None);
    let turns = v["turns"].as_array().unwrap();
    assert_eq!(turns.len(), 2);
    assert_eq!(turns[0]["role"], "patient");
    assert_eq!(turns[1]["role"], "doctor");
    let back: medconsult::Transcript = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(serde_json::to_value(&back).unwrap(), v);

    let trace_id = turn["trace_id"].as_str().unwrap();
    let (st, trace) = call("GET", &format!("{base}/traces/{trace_id}"), None, None);
    assert_eq!(st, 200);
    assert_eq!(trace["rounds"].as_array().unwrap().len() as u64, turn["rounds"].as_u64().unwrap());

    let (st, v) = call("POST", &format!("{base}/sessions/nope/messages"), Some(json!({"text": "hi"})), None);
    assert_eq!(st, 404);
    assert_eq!(v["code"], "unknown_session");
    assert!(v["message"].is_string());

    let (st, v) = call("POST", &format!("{base}/sessions/{id}/messages"), Some(json!({"text": "   "})), None);
    assert_eq!(st, 422);
    assert_eq!(v["code"], "empty_message");

    let (st, v) = call("POST", &format!("{base}/sessions/{id}/messages"), Some(json!({"txt": "hi"})), None);
    assert_eq!(st, 422);
    assert_eq!(v["code"], "validation");

    let (st, v) = call("GET", &format!("{base}/health"), None, None);
    assert_eq!(st, 200);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["index"]["docs"], 10);
}

#[test]
fn backend_failure_is_502_and_keeps_transcript() {
    let base = common::spawn_http(state(Arc::new(Failing)));
    let (_, v) = call("POST", &format!("{base}/sessions"), None, None);
    let id = v["session_id"].as_str().unwrap().to_string();
    let (st, v) = call("POST", &format!("{base}/sessions/{id}/messages"), Some(json!({"text": "I have a fever today"})), None);
    assert_eq!(st, 502);
    assert_eq!(v["code"], "backend_failure");
    let (_, v) = call("GET", &format!("{base}/sessions/{id}"), None, None);
    assert!(v["turns"].as_array().unwrap().is_empty());
    let (_, v) = call("GET", &format!("{base}/health"), None, None);
    assert_eq!(v["status"], "degraded");
}

#[test]
fn admin_index_rebuild() {
    let st8 = state(Arc::new(ScriptedBackend::new(["ok"]).unwrap()));
    let base = common::spawn_http(st8);
    let url = format!("{base}/admin/index");

    assert_eq!(call("POST", &url, Some(json!({})), None).0, 401);
    assert_eq!(call("POST", &url, Some(json!({})), Some("wrong")).0, 401);

    let (st, first) = call("POST", &url, Some(json!({})), Some("tok"));
    assert_eq!(st, 200, "{first}");
    assert_eq!(first["docs"], 10);
    let (_, again) = call("POST", &url, Some(json!({})), Some("tok"));
    assert_eq!(first["checksum"], again["checksum"]);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    let mut text = fs::read_to_string(common::fixtures().join("demo_docs.jsonl")).unwrap();
    text.push_str("{\"id\": \"broken\", \n");
    fs::write(&bad, text).unwrap();
    let (st, v) = call("POST", &url, Some(json!({"docs_path": bad})), Some("tok"));
    assert_eq!(st, 422);
    assert_eq!(v["code"], "parse_failure");
    assert!(v["message"].as_str().unwrap().contains(":11:"), "{v}");
    let (_, h) = call("GET", &format!("{base}/health"), None, None);
    assert_eq!(h["index"]["checksum"], first["checksum"]);

    let missing = dir.path().join("missing.jsonl");
    let (st, v) = call("POST", &url, Some(json!({"docs_path": missing})), Some("tok"));
    assert_eq!(st, 422);
    assert_eq!(v["code"], "io_failure");
}

#[test]
fn admin_eval_reports_metrics() {
    let base = common::spawn_http(state(Arc::new(ScriptedBackend::new(["ok"]).unwrap())));
    let rows = json!([{"id": "1", "text": "rest and drink fluids"}, {"id": "2", "text": "see a doctor"}]);
    let (st, v) = call("POST", &format!("{base}/admin/eval"), Some(json!({"predictions": rows, "references": rows})), Some("tok"));
    assert_eq!(st, 200, "{v}");
    assert_eq!(v["bleu"][0], 1.0);
    assert_eq!(v["rougeL"]["f1"], 1.0);
    assert_eq!(v["corpus_size"], 2);

    let (st, v) = call(
        "POST",
        &format!("{base}/admin/eval"),
        Some(json!({"predictions": [{"id": "1", "text": "x"}], "references": [{"id": "2", "text": "x"}]})),
        Some("tok"),
    );
    assert_eq!(st, 422);
    assert_eq!(v["code"], "validation");
}

#[test]
fn unknown_route_and_preflight() {
    let base = common::spawn_http(state(Arc::new(ScriptedBackend::new(["ok"]).unwrap())));
    let (st, v) = call("GET", &format!("{base}/nothing"), None, None);
    assert_eq!(st, 404);
    assert_eq!(v["code"], "not_found");
    let resp = agent().get(format!("{base}/health")).call().unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
