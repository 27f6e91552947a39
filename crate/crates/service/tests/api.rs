use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use ctxsql_core::eval::{apply_labels, build_report, run_phase, Dataset, LabelSource, LabelStore, Outcome, ReportOptions};
use ctxsql_core::llm::RemoteChatProvider;
use ctxsql_core::remote::RemoteConfig;
use ctxsql_core::Phase;
use ctxsql_service::{router, AppState, ServiceConfig, ServiceError};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample")
}

fn config_text(sample: &Path, feedback: &Path) -> String {
    format!(
        r#"
        top_k = 4
        [corpus]
        schema = "{s}/schema.json"
        narrowed_tables = "{s}/narrowed_tables.json"
        context = "{s}/business_context.md"
        [provider]
        mode = "replay"
        replay_file = "{s}/replay.json"
        [labels]
        feedback_log = "{f}"
        [extraction]
        refusal_patterns = "{s}/refusal_patterns.txt"
        [banding]
        dataset = "{s}/dataset.json"
        "#,
        s = sample.display(),
        f = feedback.display()
    )
}

struct Fixture {
    _dir: TempDir,
    feedback: PathBuf,
    state: Arc<AppState>,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let feedback = dir.path().join("feedback.jsonl");
        let config = ServiceConfig::parse(&config_text(&sample_dir(), &feedback), dir.path()).unwrap();
        let state = Arc::new(AppState::from_config(&config).unwrap());
        Fixture { _dir: dir, feedback, state }
    }

    fn app(&self) -> Router {
        router(self.state.clone())
    }
}

async fn send(app: Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn post(app: Router, uri: &str, body: Value) -> (StatusCode, Value) {
    send(app, "POST", uri, Some(&body.to_string())).await
}

#[tokio::test]
async fn health_lists_three_corpora_and_replay_mode() {
    let fx = Fixture::new();
    let (status, body) = send(fx.app(), "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["provider"]["mode"], "replay");
    assert_eq!(body["top_k"], 4);
    let phases = body["phases"].as_array().unwrap();
    let ids: Vec<&str> = phases.iter().map(|p| p["phase"].as_str().unwrap()).collect();
    assert_eq!(ids, ["phase1", "phase2", "phase3"]);
    let hashes: std::collections::HashSet<&str> = phases.iter().map(|p| p["corpus_hash"].as_str().unwrap()).collect();
    assert_eq!(hashes.len(), 3);
    assert!(phases.iter().all(|p| p["index_size"].as_u64().unwrap() > 0));
    assert_eq!(phases[0]["tables"], 11);
    assert_eq!(phases[2]["tables"], 7);
}

#[tokio::test]
async fn query_returns_recorded_pipeline_output() {
    let fx = Fixture::new();
    let (status, body) =
        post(fx.app(), "/api/query", json!({"nlq": "How many product families are not deleted?", "phase": "phase2"}))
            .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["extraction"]["kind"], "sql");
    assert_eq!(body["extraction"]["sql_text"], "SELECT COUNT(*) FROM PRODUCT_FAMILY WHERE DELETED IS NULL");
    assert_eq!(body["validation"]["ok"], true);
    assert_eq!(body["features"]["number_of_tables"], 1);
    assert_eq!(body["score"], 3);
    assert_eq!(body["band"], "low");
    assert_eq!(body["run_metadata"]["provider_mode"], "replay");
    let retrieved = body["retrieved"].as_array().unwrap();
    assert_eq!(retrieved.len(), 4);
    assert!(retrieved.iter().all(|r| r["similarity"].is_f64() && r["preview"].is_string()));
    assert!(retrieved.iter().any(|r| r["doc_id"] == "context"));
}

#[tokio::test]
async fn refusals_and_hallucinations_are_reported_not_errors() {
    let fx = Fixture::new();
    let (status, body) = post(fx.app(), "/api/query", json!({"nlq": "x", "nlq_id": "q07", "phase": 1})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["extraction"]["kind"], "refusal");
    assert!(body["extraction"]["sql_text"].is_null());

    let (status, body) =
        post(fx.app(), "/api/query", json!({"nlq": "x", "nlq_id": "q02", "phase": "narrowed_schema"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["validation"]["ok"], false);
    assert_eq!(body["validation"]["unknown_tables"], json!(["PRODUCT_GROUPS"]));
}

#[tokio::test]
async fn empty_or_malformed_query_is_400() {
    let fx = Fixture::new();
    for body in [json!({"nlq": "", "phase": "phase1"}), json!({"nlq": "  \n", "phase": "phase1"}), json!({"phase": "phase1"})] {
        let (status, err) = post(fx.app(), "/api/query", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(err["error"]["kind"], "bad_request");
    }
    let (status, _) = send(fx.app(), "POST", "/api/query", Some("{not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_phase_is_422() {
    let fx = Fixture::new();
    for phase in [json!("phase9"), json!(4), Value::Null] {
        let (status, err) = post(fx.app(), "/api/query", json!({"nlq": "count families", "phase": phase})).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{phase}");
        assert_eq!(err["error"]["kind"], "unknown_phase");
    }
}

#[tokio::test]
async fn replay_miss_is_502_with_detail() {
    let fx = Fixture::new();
    let (status, err) = post(fx.app(), "/api/query", json!({"nlq": "Who won the cup?", "phase": "phase2"})).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    let e = &err["error"];
    assert_eq!(e["kind"], "replay_miss");
    assert_eq!(e["stage"], "completion");
    assert!(e["message"].as_str().unwrap().contains("phase2"));
    assert_eq!(e["partial"]["phase"], "phase2");
    assert_eq!(e["partial"]["retrieved"].as_array().unwrap().len(), 4);
}

/// One-shot HTTP server answering every request with 429.
fn rate_limited_server() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        if let Ok((mut stream, _)) = listener.accept() {
            let mut buf = [0u8; 8192];
            let _ = stream.read(&mut buf);
            let _ = stream.write_all(
                b"HTTP/1.1 429 Too Many Requests\r\nretry-after: 7\r\ncontent-length: 0\r\nconnection: close\r\n\r\n",
            );
        }
    });
    format!("http://{addr}/v1")
}

#[tokio::test]
async fn remote_provider_failure_is_502() {
    let dir = tempfile::tempdir().unwrap();
    let config =
        ServiceConfig::parse(&config_text(&sample_dir(), &dir.path().join("fb.jsonl")), dir.path()).unwrap();
    let mut state = AppState::from_config(&config).unwrap();
    state.workbench.completer =
        Arc::new(RemoteChatProvider::new(RemoteConfig::new(rate_limited_server(), "test-key"), "test-model"));
    let app = router(Arc::new(state));
    let (status, err) = post(app, "/api/query", json!({"nlq": "How many cases?", "phase": "phase1"})).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(err["error"]["kind"], "rate_limited");
    assert_eq!(err["error"]["retry_after_secs"], 7);
}

#[tokio::test]
async fn concurrent_queries_match_sequential_ones() {
    let fx = Fixture::new();
    let dataset = Dataset::load_file(sample_dir().join("dataset.json")).unwrap();
    let bodies: Vec<Value> =
        dataset.cases.iter().map(|c| json!({"nlq": c.nlq, "nlq_id": c.id, "phase": "phase3"})).collect();
    let mut sequential = Vec::new();
    for b in &bodies {
        sequential.push(post(fx.app(), "/api/query", b.clone()).await);
    }
    let handles: Vec<_> = bodies
        .iter()
        .cloned()
        .map(|b| {
            let app = fx.app();
            tokio::spawn(async move { post(app, "/api/query", b).await })
        })
        .collect();
    for (h, seq) in handles.into_iter().zip(sequential) {
        let (status, mut body) = h.await.unwrap();
        let (seq_status, mut seq_body) = seq;
        assert_eq!(status, seq_status);
        for b in [&mut body, &mut seq_body] {
            for field in ["started_ms", "finished_ms"] {
                b["run_metadata"][field] = Value::Null;
            }
        }
        assert_eq!(body, seq_body);
    }
}

#[tokio::test]
async fn feedback_is_stored_with_an_id() {
    let fx = Fixture::new();
    let (status, body) = post(
        fx.app(),
        "/api/feedback",
        json!({"id": "q17", "phase": "phase2", "outcome": "pass", "labeler": "ana", "rationale": "runs as is"}),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["record_id"], "fb-000001");
    assert_eq!(body["record"]["outcome"], "pass");
    assert!(body["record"]["timestamp_ms"].as_u64().unwrap() > 0);

    let (status, body) =
        post(fx.app(), "/api/feedback", json!({"nlq": "free text question", "phase": 3, "outcome": "Partial Pass", "labeler": "bo"}))
            .await;
    assert_eq!(status, StatusCode::CREATED);
    assert!(body["record"]["id"].as_str().unwrap().starts_with("nlq-"));

    let store = LabelStore::load_file(&fx.feedback).unwrap();
    assert_eq!(store.records().len(), 2);
    assert_eq!(store.records()[1].outcome, Outcome::PartialPass);
}

#[tokio::test]
async fn malformed_feedback_is_400() {
    let fx = Fixture::new();
    let base = json!({"id": "q17", "phase": "phase2", "outcome": "pass", "labeler": "ana"});
    let mut cases = Vec::new();
    for (key, value) in [
        ("outcome", json!("maybe")),
        ("phase", json!("phase7")),
        ("labeler", json!("")),
        ("id", Value::Null),
        ("timestamp_ms", json!(-5)),
        ("rationale", json!(12)),
    ] {
        let mut b = base.clone();
        b[key] = value;
        cases.push(b);
    }
    for body in cases {
        let (status, err) = post(fx.app(), "/api/feedback", body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(err["error"]["kind"], "bad_request");
    }
    let (status, _) = send(fx.app(), "POST", "/api/feedback", Some("[1, 2]")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(LabelStore::load_file(&fx.feedback).unwrap().records().is_empty());
}

#[tokio::test]
async fn repeated_feedback_is_versioned_and_latest_wins_in_reports() {
    let fx = Fixture::new();
    for outcome in ["fail", "pass"] {
        let (status, _) =
            post(fx.app(), "/api/feedback", json!({"id": "q03", "phase": "phase1", "outcome": outcome, "labeler": "ana"}))
                .await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let store = LabelStore::load_file(&fx.feedback).unwrap();
    assert_eq!(store.records().len(), 2);

    let dataset = Dataset::load_file(sample_dir().join("dataset.json")).unwrap();
    let env = &fx.state.environments[&Phase::SchemaOnly];
    let run = run_phase(&dataset, Phase::SchemaOnly, env, &fx.state.workbench, 1, 4).unwrap();
    let labeled = apply_labels(&run, &store, true).unwrap();
    let q03 = labeled.iter().find(|l| l.id == "q03").unwrap();
    assert_eq!(q03.outcome, Outcome::Pass);
    assert_eq!(q03.label, LabelSource::Human { labeler: "ana".into() });

    let report = build_report(&dataset, &[run], &store, &ReportOptions::default()).unwrap();
    let row = report.cases.iter().find(|c| c.id == "q03").unwrap();
    assert_eq!(row.phases[0].outcome, Outcome::Pass);
}

#[test]
fn missing_corpus_fails_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_text(&sample_dir(), &dir.path().join("fb.jsonl")).replace("schema.json", "absent.json");
    let config = ServiceConfig::parse(&text, dir.path()).unwrap();
    assert!(matches!(AppState::from_config(&config), Err(ServiceError::Corpus(_))));
}

#[test]
fn stale_index_sidecar_fails_at_startup() {
    use ctxsql_core::context::{ChunkParams, TrigramEmbedder};
    use ctxsql_core::pipeline::{build_environments, CorpusSources, PhaseEnvironment};

    let dir = tempfile::tempdir().unwrap();
    let s = sample_dir();
    let context = dir.path().join("context.md");
    std::fs::copy(s.join("business_context.md"), &context).unwrap();
    let sources = CorpusSources::load(&s.join("schema.json"), &s.join("narrowed_tables.json"), &context).unwrap();
    let index_dir = dir.path().join("index");
    std::fs::create_dir_all(&index_dir).unwrap();
    let envs = build_environments::<f64>(&sources, ChunkParams::default(), &TrigramEmbedder::default()).unwrap();
    for (phase, env) in &envs {
        env.save(&PhaseEnvironment::<f64>::sidecar_path(&index_dir, *phase)).unwrap();
    }
    let text = config_text(&s, &dir.path().join("fb.jsonl"))
        .replace(&format!("{}/business_context.md", s.display()), &context.display().to_string())
        .replace("[provider]", &format!("index_dir = \"{}\"\n[provider]", index_dir.display()));
    let config = ServiceConfig::parse(&text, dir.path()).unwrap();
    assert!(AppState::from_config(&config).is_ok());

    std::fs::write(&context, "edited after ingest").unwrap();
    let err = AppState::from_config(&config).err().expect("stale index must be rejected");
    assert!(err.to_string().contains("stale"), "{err}");
}
