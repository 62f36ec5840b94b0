//! Command-line behaviour: outputs, exit codes and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn lpkg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpkg"))
        .args(args)
        .env_remove("LPKG_QA_BASE_URL")
        .env_remove("LPKG_PLANNER_BASE_URL")
        .env_remove("LPKG_VERBALIZER_BASE_URL")
        .env_remove("LPKG_RETRIEVER_URL")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ground_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let toy = fixture("toy50.tsv");
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        let o = lpkg(&["--kg", s(&toy), "ground", "--pattern", "2p", "--budget", "10", "--seed", "7", "--output", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn ground_defaults_to_all_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let o = lpkg(&["--kg", s(&fixture("toy50.tsv")), "--out", s(dir.path()), "ground", "--budget", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("instances.jsonl")).unwrap();
    let patterns: std::collections::BTreeSet<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["pattern"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(patterns.len(), 9);
}

#[test]
fn usage_errors_exit_2() {
    let toy = fixture("toy50.tsv");
    let o = lpkg(&["--kg", s(&toy), "ground", "--budget", "0"]);
    assert_eq!(code(&o), 2);
    let o = lpkg(&["--kg", s(&toy), "--stub", "e2e", "--scale", "0"]);
    assert_eq!(code(&o), 2);
    let o = lpkg(&["ground", "--pattern", "9z"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn corrupt_graph_names_kg_store() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "only two\tcolumns\n").unwrap();
    for kg in [bad.as_path(), Path::new("/nonexistent/graph.tsv")] {
        let o = lpkg(&["--kg", s(kg), "--out", s(dir.path()), "--stub", "e2e", "--scale", "10"]);
        assert_eq!(code(&o), 2);
        assert!(stderr(&o).contains("kg-store"), "{}", stderr(&o));
    }
}

#[test]
fn missing_endpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let toy = fixture("toy50.tsv");
    let o = lpkg(&["--kg", s(&toy), "--out", s(dir.path()), "ground", "--budget", "1"]);
    assert_eq!(code(&o), 0);
    let o = lpkg(&["--kg", s(&toy), "--out", s(dir.path()), "verbalize"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("verbalize") && stderr(&o).contains("LPKG_VERBALIZER_BASE_URL"), "{}", stderr(&o));
}

#[test]
fn unreachable_endpoint_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let toy = fixture("toy50.tsv");
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "[retry]\nmax_retries = 0\n[endpoints.verbalizer]\nbase_url = \"http://127.0.0.1:9\"\nmodel = \"m\"\ntimeout_secs = 2\n",
    )
    .unwrap();
    let o = lpkg(&["--kg", s(&toy), "--out", s(dir.path()), "ground", "--budget", "1", "--pattern", "1p"]);
    assert_eq!(code(&o), 0);
    let o = lpkg(&["--config", s(&cfg), "--kg", s(&toy), "--out", s(dir.path()), "verbalize"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: verbalize:"), "{}", stderr(&o));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let o = lpkg(&["--config", s(&cfg), "ground"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("config"));
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn e2e_stub_is_perfect_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let desk = fixture("desk.tsv");
    for (dir, jobs) in [(&a, "1"), (&b, "4")] {
        let o = lpkg(&["--kg", s(&desk), "--out", s(dir.path()), "--stub", "--jobs", jobs, "e2e", "--scale", "120"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("precision 1.0000 recall 1.0000 over 120 items"));
    }
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    assert_eq!(fa.len(), 8);
    assert_eq!(fa, fb);
}

#[test]
fn stepwise_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    let toy = fixture("toy50.tsv");
    let k = s(&toy);
    for args in [
        vec!["--kg", k, "--out", d, "--stub", "ground", "--budget", "5", "--seed", "1"],
        vec!["--kg", k, "--out", d, "--stub", "verbalize"],
        vec!["--out", d, "build-train", "--quota", "5"],
        vec!["--kg", k, "--out", d, "--stub", "gen-bench", "--scale", "24", "--seed", "2"],
        vec!["--out", d, "--stub", "plan"],
        vec!["--kg", k, "--out", d, "--stub", "execute"],
        vec!["--out", d, "eval"],
        vec!["--out", d, "leakage"],
    ] {
        let o = lpkg(&args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["overall"]["precision"], 1.0);
    assert!(dir.path().join("leakage.json").exists());
    assert!(dir.path().join("train.report.json").exists());

    // one question through the oracle planner
    let bench: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("benchmark.json")).unwrap()).unwrap();
    let q = bench["items"][0]["question"].as_str().unwrap();
    let o = lpkg(&["--out", d, "--stub", "plan", "--question", q]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Finish_The_Plan"));
}

#[test]
fn leakage_removes_identical_questions() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    let toy = fixture("toy50.tsv");
    let k = s(&toy);
    for args in [
        vec!["--kg", k, "--out", d, "--stub", "ground", "--budget", "3"],
        vec!["--kg", k, "--out", d, "--stub", "verbalize"],
        vec!["--out", d, "build-train", "--quota", "3"],
        // no exclusion: the benchmark reuses training instances and questions
        vec!["--kg", k, "--out", d, "--stub", "gen-bench", "--scale", "24", "--seed", "0"],
        vec!["--out", d, "leakage"],
    ] {
        let o = lpkg(&args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("leakage.json")).unwrap()).unwrap();
    let removed = report["removed"].as_array().unwrap();
    assert!(!removed.is_empty());
    assert!(removed.iter().all(|h| h["similarity"].as_f64().unwrap() > 0.9));
}
