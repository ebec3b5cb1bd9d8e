mod common;

use std::fs;
use std::process::Command;

use medconsult::cli::run;

fn cli(args: &[&str]) -> (i32, String, String) {
    cli_stdin(args, "")
}

fn cli_stdin(args: &[&str], stdin: &str) -> (i32, String, String) {
    let mut argv = vec!["medconsult"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut stdin.as_bytes(), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn fx(name: &str) -> String {
    common::fixtures().join(name).to_string_lossy().into_owned()
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_medconsult");
    let out = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = Command::new(bin).args(["corpus", "validate", "/nonexistent.jsonl"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_flag_is_usage_error() {
    let (code, _, err) = cli(&["corpus", "validate", "x", "--bogus"]);
    assert_eq!(code, 2);
    assert!(err.contains("--bogus"));
}

#[test]
fn eval_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let rows = "{\"id\":\"a\",\"text\":\"rest and drink fluids\"}\n{\"id\":\"b\",\"text\":\"see a doctor if it persists\"}\n";
    let p = dir.path().join("p.jsonl");
    fs::write(&p, rows).unwrap();
    let out_path = dir.path().join("report.json");
    let (code, out, err) = cli(&["eval", "run", "--pred", p.to_str().unwrap(), "--ref", p.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["bleu"][0], 1.0);
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(saved, report);
}

#[test]
fn corpus_validate_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let body: String = (0..10)
        .map(|i| format!("{{\"id\":\"r{i}\",\"department\":\"general\",\"query\":\"q{i} fever\",\"response\":\"a{i}\"}}\n"))
        .collect();
    fs::write(&corpus, &body).unwrap();
    let (code, out, _) = cli(&["corpus", "validate", corpus.to_str().unwrap(), "--pii", &fx("pii_patterns.txt")]);
    assert_eq!(code, 0);
    assert!(out.contains("\"records\":10"));

    let split_dir = dir.path().join("split");
    let args = ["corpus", "split", corpus.to_str().unwrap(), "--test-fraction", "0.3", "--seed", "7", "--out", split_dir.to_str().unwrap()];
    assert_eq!(cli(&args).0, 0);
    let train = fs::read_to_string(split_dir.join("train.jsonl")).unwrap();
    let test = fs::read_to_string(split_dir.join("test.jsonl")).unwrap();
    assert_eq!((train.lines().count(), test.lines().count()), (7, 3));
    let first = fs::read_to_string(split_dir.join("split.json")).unwrap();
    assert_eq!(cli(&args).0, 0);
    assert_eq!(fs::read_to_string(split_dir.join("split.json")).unwrap(), first);

    fs::write(&corpus, format!("{body}{{\"id\":\"r99\",\"query\":\"mail me at a@b.com\"}}\n")).unwrap();
    let (code, _, err) = cli(&["corpus", "validate", corpus.to_str().unwrap(), "--pii", &fx("pii_patterns.txt")]);
    assert_eq!(code, 1);
    assert!(err.contains(":11:"), "{err}");
}

#[test]
fn links_index_and_query() {
    let dir = tempfile::tempdir().unwrap();
    let links = dir.path().join("links.jsonl");
    let index = dir.path().join("index.jsonl");
    let (code, out, err) = cli(&["terms", "build-links", "--docs", &fx("demo_docs.jsonl"), "--aliases", &fx("aliases.tsv"), "--out", links.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("\"terms\":9"), "{out}");
    let (code, out, err) = cli(&["retrieval", "build", "--docs", &fx("demo_docs.jsonl"), "--links", links.to_str().unwrap(), "--out", index.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("\"docs\":10"));
    let header = fs::read_to_string(&index).unwrap();
    assert!(header.starts_with("{\"format\":\"medconsult-index\",\"version\":1"));

    let (code, out, _) = cli(&["retrieval", "query", "--index", index.to_str().unwrap(), "--q", "I have a fever today", "--top-k", "3"]);
    assert_eq!(code, 0);
    let rows: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!rows.is_empty() && rows.len() <= 3);
    let fever_docs = ["doc-fever-01", "doc-fever-02", "doc-dehydration-01", "doc-throat-01"];
    for r in &rows {
        assert!(fever_docs.contains(&r["doc_id"].as_str().unwrap()), "{r}");
        assert!(r["p"].is_number() && r["p_hat"].is_number());
    }
}

#[test]
fn sentiment_classify_rows() {
    let (code, out, _) = cli(&["sentiment", "classify", "--text", "Drink more hot water."]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["label"], "Negative");
    assert_eq!(v["evidence"][0]["phrase"], "drink more hot water");

    let dir = tempfile::tempdir().unwrap();
    let lex = dir.path().join("lex.tsv");
    fs::write(&lex, "hot water\t2.0\n").unwrap();
    let (_, out, _) = cli(&["sentiment", "classify", "--lexicon", lex.to_str().unwrap(), "--text", "Drink more hot water."]);
    assert!(out.contains("\"Positive\""));
}

#[test]
fn chat_replays_case_study() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let (code, out, err) = cli_stdin(
        &["chat", "--backend", "scripted", "--script", &fx("case_study.jsonl"), "--trace-out", trace.to_str().unwrap()],
        "I have a fever today\n",
    );
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("doctor: Drink adequate amounts of fluids."), "{out}");
    assert!(out.contains("[sentiment: Positive"));
    assert!(out.contains("[rounds: 2]"));
    let t: serde_json::Value = serde_json::from_str(fs::read_to_string(trace).unwrap().trim()).unwrap();
    assert_eq!(t["trace"]["rounds"][0]["response"], "Drink more hot water.");
    assert_eq!(t["trace"]["constraint_texts"][0], "Please do not say, \"Drink more hot water.\"");
}

#[test]
fn chat_json_with_always_negative_script() {
    let (code, out, _) = cli(&["chat", "--script", &fx("always_negative.jsonl"), "--json", "-m", "I have a fever today", "-m", "still fever"]);
    assert_eq!(code, 0);
    let rows: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["rounds"], 3);
    assert_eq!(rows[0]["feedback"]["label"], "Negative");
}

#[test]
fn serve_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[engine]\nnope = 1\n").unwrap();
    let (code, _, err) = cli(&["serve", "--config", cfg.to_str().unwrap(), "--port", "0"]);
    assert_eq!(code, 1);
    assert!(err.contains("configuration"));
}

#[test]
fn shipped_config_builds_a_service() {
    let cfg = medconsult::config::Config::load(&common::fixtures().join("config.toml")).unwrap();
    let svc = medconsult::Service::from_config(&cfg).unwrap();
    assert_eq!(svc.index_summary().docs, 10);
    let id = svc.create_session().unwrap();
    let r = svc.post_message(&id, "I have a fever today").unwrap();
    assert_eq!(r.rounds, 2);
}
