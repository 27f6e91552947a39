use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn ctxsql(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ctxsql"));
    cmd.args(args).current_dir(root()).env_remove("CTXSQL_API_BASE").env_remove("CTXSQL_API_KEY");
    cmd
}

fn run_ok(args: &[&str]) -> String {
    let out = ctxsql(args).output().unwrap();
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn run_json(args: &[&str]) -> Value {
    serde_json::from_str(&run_ok(args)).unwrap()
}

fn with_stdin(args: &[&str], input: &str) -> Output {
    let mut child = ctxsql(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

const REPLAY: &[&str] =
    &["--replay", "data/sample/replay.json", "--refusal-patterns", "data/sample/refusal_patterns.txt"];

#[test]
fn score_reads_stdin_and_validates() {
    let out = with_stdin(
        &["score", "--time-to-create", "4", "--schema", "data/sample/schema.json"],
        "SELECT f.NAME FROM PRODUCT_FAMILY f JOIN PRODUCT_GROUPS g ON f.PRODUCT_GROUP_ID = g.ID WHERE f.DELETED IS NULL",
    );
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["features"]["number_of_tables"], 2);
    assert_eq!(v["features"]["number_of_joins"], 1);
    assert_eq!(v["score"], 8);
    assert_eq!(v["validation"]["ok"], false);
    assert_eq!(v["validation"]["unknown_tables"], serde_json::json!(["PRODUCT_GROUPS"]));
}

#[test]
fn score_rejects_non_select() {
    let out = with_stdin(&["score"], "DELETE FROM CASE_MASTER");
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn band_lists_and_datasets() {
    let out = with_stdin(&["band"], "1, 2 3\n4,5,6,7,8");
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["thresholds"]["p25"], 2.0);
    assert_eq!(v["thresholds"]["p75"], 6.0);
    assert_eq!(v["counts"], serde_json::json!({"low": 1, "medium": 5, "high": 2}));
    assert_eq!(v["summary"]["median"], 4.5);

    let v = run_json(&["band", "--dataset", "data/sample/dataset.json"]);
    assert_eq!(v["counts"], serde_json::json!({"low": 1, "medium": 8, "high": 3}));
    assert_eq!(v["ids"].as_array().unwrap().len(), 12);
}

#[test]
fn stats_prints_float_and_exact_values() {
    let v = run_json(&["stats", "--table", "3,1;1,3"]);
    assert_eq!(v["p_value_exact"], "17/35");
    assert!((v["p_value"].as_f64().unwrap() - 34.0 / 70.0).abs() < 1e-9);
    assert_eq!(v["method"]["kind"], "exact");
    let v = run_json(&["stats", "--table", "1,2,3;4,5,6"]);
    assert!(v["p_value_exact"].is_null());
    assert!(!ctxsql(&["stats", "--table", "1,2;3"]).output().unwrap().status.success());
}

#[test]
fn ingest_then_query_from_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let v = run_json(&["ingest", "--out", out_dir]);
    assert_eq!(v["indices"].as_array().unwrap().len(), 3);
    assert_eq!(v["dropped_foreign_keys"][0]["table"], "PRODUCT_FAMILY");
    for phase in ["phase1", "phase2", "phase3"] {
        assert!(dir.path().join(format!("{phase}.index.json")).exists());
    }
    let mut args =
        vec!["query", "--phase", "phase2", "--nlq", "How many product families are not deleted?", "--index-dir", out_dir];
    args.extend_from_slice(REPLAY);
    let v = run_json(&args);
    assert_eq!(v["extraction"]["kind"], "sql");
    assert_eq!(v["extraction"]["sql_text"], "SELECT COUNT(*) FROM PRODUCT_FAMILY WHERE DELETED IS NULL");
    assert_eq!(v["validation"]["ok"], true);
    assert_eq!(v["run_metadata"]["provider_mode"], "replay");
}

#[test]
fn query_with_config_and_replay_miss() {
    let v = run_json(&[
        "query",
        "--config",
        "data/sample/service.toml",
        "--phase",
        "narrowed_schema",
        "--nlq",
        "anything",
        "--nlq-id",
        "q08",
    ]);
    assert_eq!(v["extraction"]["kind"], "unparseable");
    assert!(v["band"].is_null());
    let v = run_json(&["query", "--config", "data/sample/service.toml", "--phase", "3", "--nlq", "x", "--nlq-id", "q04"]);
    assert_eq!(v["score"], 7);
    assert_eq!(v["band"], "medium");

    let mut args = vec!["query", "--phase", "1", "--nlq", "Who won the cup?"];
    args.extend_from_slice(REPLAY);
    let out = ctxsql(&args).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no recorded response"));
}

#[test]
fn query_without_replay_or_credentials_fails_cleanly() {
    let out = ctxsql(&["query", "--phase", "phase1", "--nlq", "count cases"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing configuration: CTXSQL_"));
}

fn evaluate(out: &Path, seed: &str) {
    let mut args = vec!["evaluate", "--dataset", "data/sample/dataset.json", "--seed", seed, "--out", out.to_str().unwrap()];
    args.extend_from_slice(REPLAY);
    run_ok(&args);
}

fn report(runs: &Path, format: &str) -> String {
    run_ok(&[
        "report",
        "--runs",
        runs.to_str().unwrap(),
        "--dataset",
        "data/sample/dataset.json",
        "--labels",
        "data/sample/labels.jsonl",
        "--format",
        format,
    ])
}

#[test]
fn evaluate_is_reproducible_and_order_independent() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    evaluate(&a, "11");
    evaluate(&b, "11");
    evaluate(&c, "12");
    for phase in ["phase1", "phase2", "phase3"] {
        let file = format!("{phase}.run.json");
        assert_eq!(std::fs::read(a.join(&file)).unwrap(), std::fs::read(b.join(&file)).unwrap());
        let ra: Value = serde_json::from_slice(&std::fs::read(a.join(&file)).unwrap()).unwrap();
        let rc: Value = serde_json::from_slice(&std::fs::read(c.join(&file)).unwrap()).unwrap();
        assert_ne!(ra["presentation_order"], rc["presentation_order"]);
        assert_eq!(ra["results"], rc["results"]);
    }
    assert_eq!(report(&a, "json"), report(&b, "json"));
    let text = report(&a, "text");
    assert!(text.contains("Phase 2: schema with business context document"));
    assert!(text.contains("seed 11"));
    let csv = report(&a, "csv");
    assert!(csv.starts_with("phase,result,low,medium,high,total,percent\n"));
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.contains("\nphase2,total,1,8,3,12,\n"));
    assert!(report(&a, "boxplot").starts_with("id,score,band\n"));
}

#[test]
fn report_without_auto_labels_names_gaps() {
    let dir = tempfile::tempdir().unwrap();
    evaluate(dir.path(), "1");
    let out = ctxsql(&[
        "report",
        "--runs",
        dir.path().to_str().unwrap(),
        "--dataset",
        "data/sample/dataset.json",
        "--labels",
        "data/sample/labels.jsonl",
        "--no-auto-label",
    ])
    .output()
    .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no label for phase1: q07, q11"));
}

/// Copy of the sample directory, so the service config's relative paths
/// (including the feedback log) point into a scratch location.
fn sample_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(root().join("data/sample")).unwrap() {
        let path = entry.unwrap().path();
        std::fs::copy(&path, dir.path().join(path.file_name().unwrap())).unwrap();
    }
    dir
}

#[test]
fn serve_refuses_to_start_without_corpus() {
    let dir = sample_copy();
    std::fs::remove_file(dir.path().join("schema.json")).unwrap();
    let config = dir.path().join("service.toml");
    let out = ctxsql(&["serve", "--config", config.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema.json"));
}

fn http_get(addr: &str, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(addr).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nhost: {addr}\r\nconnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    stream.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_answers_health() {
    let dir = sample_copy();
    let config = dir.path().join("service.toml");
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = ctxsql(&["serve", "--config", config.to_str().unwrap(), "--listen", &addr])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let mut response = None;
    while Instant::now() < deadline {
        if let Some(r) = http_get(&addr, "/api/health") {
            response = Some(r);
            break;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    let _ = child.kill();
    let _ = child.wait();
    let response = response.expect("service did not come up");
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"mode\":\"replay\""));
}
