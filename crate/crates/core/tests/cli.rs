mod common;

use std::collections::HashMap;
use std::io::Write;
use std::process::{Command, Output, Stdio};

use claimver::linker::link_entities;
use claimver::prompt::build_verification_prompt;
use claimver::report::VerificationReport;
use claimver::retrieval::{retrieve, RetrievalConfig};

use common::*;

fn claimver(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_claimver"))
        .args(args)
        .env_remove("CLAIMVER_API_KEY")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    if let Some(s) = stdin {
        // The process may exit before reading everything.
        let _ = child.stdin.take().unwrap().write_all(s.as_bytes());
    }
    child.wait_with_output().unwrap()
}

/// Writes a canned-response file answering the fixture text's prompt.
fn mock_file(dir: &tempfile::TempDir, response: &str) -> String {
    let kg = moon_kg();
    let text = moon_text();
    let seeds: Vec<_> = link_entities(&kg, &text).into_iter().map(|e| e.node).collect();
    let retrieved = retrieve(&kg, &seeds, &RetrievalConfig::default()).unwrap();
    let prompt = build_verification_prompt(&text, &retrieved.triplets);
    let table: HashMap<String, String> = [(prompt.hash(), response.to_string())].into();
    let path = dir.path().join("mock.json");
    std::fs::write(&path, serde_json::to_string(&table).unwrap()).unwrap();
    path.display().to_string()
}

fn path(name: &str) -> String {
    fixture(name).display().to_string()
}

fn verify_args<'a>(kg: &'a str, nodes: &'a str, mock: &'a str) -> Vec<&'a str> {
    vec!["verify", "--kg", kg, "--kg-nodes", nodes, "--mock-responses", mock]
}

#[test]
fn verify_json_from_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let mock = mock_file(&dir, MOON_RESPONSE);
    let (kg, nodes) = (path("moon.tsv"), path("moon_nodes.tsv"));
    let text = moon_text();
    let out = claimver(&verify_args(&kg, &nodes, &mock), Some(&text));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = VerificationReport::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(report.n, 2);
    assert!((report.kas - report.recomputed_kas()).abs() < 1e-12);

    // Same report written to a file, in the same bytes.
    let out_path = dir.path().join("report.json");
    let mut args = verify_args(&kg, &nodes, &mock);
    let fixture_text = path("moon.txt");
    let out_str = out_path.display().to_string();
    args.extend(["--input", &fixture_text, "--out", &out_str, "--sequential"]);
    let again = claimver(&args, None);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(std::fs::read(&out_path).unwrap(), out.stdout);
}

#[test]
fn verify_ansi_and_html() {
    let dir = tempfile::tempdir().unwrap();
    let mock = mock_file(&dir, MOON_RESPONSE);
    let (kg, nodes) = (path("moon.tsv"), path("moon_nodes.tsv"));
    let text = moon_text();
    let mut args = verify_args(&kg, &nodes, &mock);
    args.extend(["--format", "ansi"]);
    let out = claimver(&args, Some(&text));
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.contains("\x1b[31mThe Moon landing was staged by NASA\x1b[0m"), "{s}");
    assert!(s.contains("KAS: "));
    let mut args = verify_args(&kg, &nodes, &mock);
    args.extend(["--format", "html"]);
    let out = claimver(&args, Some(&text));
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.contains("<mark class=\"claim contradictory\""));
    assert!(s.contains("United States space agency"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (kg, nodes) = (path("moon.tsv"), path("moon_nodes.tsv"));
    let text = moon_text();

    let missing = claimver(&["verify", "--kg", "/nonexistent.tsv", "--mock-responses", "x.json"], Some(&text));
    assert_eq!(missing.status.code(), Some(2));

    let bad_alpha = mock_file(&dir, MOON_RESPONSE);
    let mut args = verify_args(&kg, &nodes, &bad_alpha);
    args.extend(["--alpha", "-1"]);
    assert_eq!(claimver(&args, Some(&text)).status.code(), Some(2));

    // Prompt not in the canned table: a backend failure.
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "{}").unwrap();
    let empty = empty.display().to_string();
    let out = claimver(&verify_args(&kg, &nodes, &empty), Some(&text));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("llm-backend"));

    let garbage = mock_file(&dir, "no structured output here");
    let out = claimver(&verify_args(&kg, &nodes, &garbage), Some(&text));
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unauthorized_http_backend_exits_3() {
    let mut server = mockito::Server::new();
    let _m = server.mock("POST", "/chat/completions").with_status(401).create();
    let (kg, url) = (path("moon.tsv"), server.url());
    let out = claimver(&["verify", "--kg", &kg, "--backend-url", &url, "--model", "m"], Some("Apollo 11 landed."));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("authentication"));
}

#[test]
fn datagen_emits_prompts() {
    let kg = path("moon.tsv");
    let input = concat!(
        r#"{"full_text": "Neil Armstrong flew on Apollo 11.", "text_span": "Neil Armstrong flew"}"#,
        "\n",
        r#"{"full_text": "NASA operated it."}"#,
        "\n"
    );
    let out = claimver(&["datagen", "--kg", &kg], Some(input));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["text_span"], "Neil Armstrong flew");
    assert_eq!(lines[0]["triplets"][0], "(Apollo 11, crew member, Neil Armstrong)");
    assert!(lines[0]["prompt"].as_str().unwrap().contains("**Text span:** \"Neil Armstrong flew\""));
    assert!(lines[0].get("response").is_none());
    assert_eq!(lines[1]["text_span"], "NASA operated it.");

    let bad = claimver(&["datagen", "--kg", &kg], Some(r#"{"full_text": "a", "text_span": "b"}"#));
    assert_eq!(bad.status.code(), Some(2));
}
