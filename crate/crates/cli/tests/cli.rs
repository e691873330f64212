use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn annolap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_annolap"))
        .args(args)
        .env_remove("ANNOLAP_OUTPUT")
        .env_remove("ANNOLAP_USER")
        .output()
        .expect("binary runs")
}

fn replay_args(script: &Path) -> Vec<String> {
    let f = fixtures();
    [
        ("--schema", f.join("sales.schema.json")),
        ("--data", f.join("data")),
        ("--preferences", f.join("preferences.jsonl")),
        ("--annotations", f.join("annotations.jsonl")),
        ("--script", script.to_path_buf()),
    ]
    .into_iter()
    .flat_map(|(flag, p)| [flag.to_string(), p.display().to_string()])
    .collect()
}

fn replay(script: &Path, extra: &[&str]) -> Output {
    let mut args: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    args.push("replay".into());
    args.extend(replay_args(script));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    annolap(&args)
}

#[test]
fn validate_accepts_fixture_schema() {
    let schema = fixtures().join("sales.schema.json");
    let out = annolap(&["validate", schema.to_str().unwrap()]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["valid"], true);
    assert_eq!(v["findings"], Value::Array(vec![]));
}

#[test]
fn validate_reports_findings_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: Value = serde_json::from_str(
        &std::fs::read_to_string(fixtures().join("sales.schema.json")).unwrap(),
    )
    .unwrap();
    doc["dimensions"][0]["hierarchies"][0]["params"]
        .as_array_mut()
        .unwrap()
        .push(Value::from("NOPE"));
    let path = dir.path().join("bad.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = annolap(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["valid"], false);
    assert!(!v["findings"].as_array().unwrap().is_empty());
}

#[test]
fn scenario_json_lists_every_step() {
    let out = replay(&fixtures().join("scenario.ops"), &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let steps = v["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 3);
    assert_eq!(steps[0]["line"], 2);
    assert_eq!(steps[2]["step"], 3);
    assert_eq!(
        steps[2]["recommendations"]["items"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
}

#[test]
fn text_output_shows_context_and_table() {
    let out = replay(&fixtures().join("scenario.ops"), &["--output", "text"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("step 1 (line 2): DISPLAY("));
    assert!(text.contains("context CA1"));
    assert!(text.contains("SUM(REMISE)"));
    assert!(text.contains("5097.58"));
    assert!(text.contains("recommendation 1 [P1]"));
}

#[test]
fn failing_step_exits_two_with_its_position() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.ops");
    std::fs::write(
        &script,
        "DISPLAY(FVENTES, SUM(REMISE), DCLIENTS.HGEOFR)\nDRILLDOWN(DCLIENTS, ETAT)\n",
    )
    .unwrap();
    let out = replay(&script, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("step 2 (line 2) failed"), "{err}");
    assert!(err.contains("ETAT"), "{err}");
}

#[test]
fn syntax_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.ops");
    std::fs::write(&script, "DISPLAY(FVENTES\n").unwrap();
    let out = replay(&script, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn missing_inputs_exit_one() {
    let out = replay(Path::new("/nonexistent/script.ops"), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn annotate_appends_to_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("annotations.jsonl");
    std::fs::copy(fixtures().join("annotations.jsonl"), &store).unwrap();
    let schema = fixtures().join("sales.schema.json");
    let out = annolap(&[
        "annotate",
        "(λ, DTEMPS.HTEMPS/Annee=2010, λ)",
        "comment",
        "a quiet year",
        "--schema",
        schema.to_str().unwrap(),
        "--annotations",
        store.to_str().unwrap(),
        "--author",
        "U2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["id"], "A6");
    let lines = std::fs::read_to_string(&store).unwrap();
    assert_eq!(lines.lines().count(), 6);
}

#[test]
fn annotate_rejects_bad_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("annotations.jsonl");
    let schema = fixtures().join("sales.schema.json");
    let out = annolap(&[
        "annotate",
        "(λ, λ, λ)",
        "comment",
        "nothing",
        "--schema",
        schema.to_str().unwrap(),
        "--annotations",
        store.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty anchor"));
    assert!(!store.exists());
}
