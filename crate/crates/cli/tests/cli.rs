//! Command-line behaviour: exit codes, config diagnostics, output safety.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/worked_examples")
}

fn ten(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ten"))
        .args(args)
        .env_remove("TEN_LOG")
        .env_remove("TEN_API_KEY")
        .output()
        .expect("run ten")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copies the worked-example workspace, rewriting the config with `edit`.
fn workspace(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let src = fixture();
    fs::copy(src.join("corpus.jsonl"), dir.join("corpus.jsonl")).unwrap();
    for sub in ["demos", "mock"] {
        fs::create_dir_all(dir.join(sub)).unwrap();
        for entry in fs::read_dir(src.join(sub)).unwrap().flatten() {
            fs::copy(entry.path(), dir.join(sub).join(entry.file_name())).unwrap();
        }
    }
    let config = dir.join("pipeline.toml");
    fs::write(&config, edit(fs::read_to_string(src.join("pipeline.toml")).unwrap())).unwrap();
    config
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn config_errors_name_every_bad_field() {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace(tmp.path(), |t| t.replace("k = 15", "k = 1").replace("margin = 0.05", "margin = 2.0"));
    let out = ten(&["--config", s(&config), "pipeline", "all"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("prefs.k"), "{err}");
    assert!(err.contains("prefs.margin"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unknown_keys_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace(tmp.path(), |t| t.replace("[prefs]", "[prefs]\nbeta = 0.1"));
    let out = ten(&["--config", s(&config), "pipeline", "all"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("beta"), "{}", stderr(&out));
}

#[test]
fn live_endpoint_needs_a_url() {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace(tmp.path(), |t| t.replace("mock = true", "mock = false"));
    let out = ten(&["--config", s(&config), "distill", "supervise"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("teacher.url"), "{}", stderr(&out));
}

#[test]
fn bad_source_and_missing_input_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture().join("corpus.jsonl");
    let out = ten(&["corpus", "prep", "--source", "reuters", "--in", s(&input), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = ten(&["corpus", "prep", "--in", "/nonexistent.jsonl", "--out", s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stale_output_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture().join("corpus.jsonl");
    let out_dir = tmp.path().join("prep");
    let args = ["corpus", "prep", "--in", s(&input), "--out", s(&out_dir)];
    assert_eq!(ten(&args).status.code(), Some(0));
    let again = ten(&args);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"), "{}", stderr(&again));

    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(ten(&forced).status.code(), Some(0));
    assert_eq!(manifest(&out_dir)["status"], "ok");
}

#[test]
fn force_never_clears_foreign_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("mine");
    fs::create_dir_all(&out_dir).unwrap();
    fs::write(out_dir.join("notes.txt"), "keep me").unwrap();
    let input = fixture().join("corpus.jsonl");
    let out = ten(&["corpus", "prep", "--in", s(&input), "--out", s(&out_dir), "--force"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fs::read_to_string(out_dir.join("notes.txt")).unwrap(), "keep me");
}

#[test]
fn strict_mock_without_fixtures_is_a_stage_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace(tmp.path(), |t| t.replace("mock = true", "mock = true\nmock_strict = true"));
    let out_dir = tmp.path().join("run");
    let out = ten(&["--config", s(&config), "--out", s(&out_dir), "pipeline", "all"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert_eq!(manifest(&out_dir)["status"], "failed");
    // the corpus stage finished before the teacher was needed
    assert_eq!(manifest(&out_dir.join("corpus"))["status"], "ok");
}

#[test]
fn stages_chain_by_hand() {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace(tmp.path(), |t| t);
    let c = s(&config);
    let sup = tmp.path().join("sup");
    assert_eq!(ten(&["--config", c, "--out", s(&sup), "distill", "supervise"]).status.code(), Some(0));
    let supervision = sup.join("supervision.jsonl");
    assert!(supervision.exists());

    let sft = tmp.path().join("sft");
    let out = ten(&["--config", c, "--out", s(&sft), "distill", "emit", "--supervision", s(&supervision)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(sft.join("sft_rationale.jsonl").exists() && sft.join("sft_headline.jsonl").exists());

    let prefs = tmp.path().join("prefs");
    let out = ten(&[
        "--config", c, "--out", s(&prefs), "prefs", "build", "--supervision", s(&supervision), "--k", "6",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let m = manifest(&prefs);
    assert_eq!(m["status"], "ok");
    assert!(m["artifacts"]["dpo.jsonl"].is_string());
    assert!(m["inputs"].as_object().unwrap().keys().any(|k| k.contains("supervision")));
}

#[test]
fn eval_run_scores_a_predictions_file() {
    let tmp = tempfile::tempdir().unwrap();
    let pred = tmp.path().join("pred.jsonl");
    let corpus = fixture().join("corpus.jsonl");
    let text: String = fs::read_to_string(&corpus)
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            serde_json::json!({"id": v["id"], "generated_headline": v["headline"]}).to_string() + "\n"
        })
        .collect();
    fs::write(&pred, text).unwrap();
    let out_dir = tmp.path().join("eval");
    let out = ten(&["eval", "run", "--pred", s(&pred), "--corpus", s(&corpus), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["overall_acc"], 100.0);
    assert_eq!(report["rouge1"], 100.0);
}

#[test]
fn check_demos_reports_each_demo() {
    let out = ten(&["distill", "check-demos", "--dir", s(&fixture().join("demos"))]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    for op in ["Copy", "Add", "Subtract", "Paraphrase", "Round"] {
        assert!(text.contains(op), "{text}");
    }
}

#[test]
fn broken_demo_fails_the_check() {
    let tmp = tempfile::tempdir().unwrap();
    workspace(tmp.path(), |t| t);
    let demos = tmp.path().join("demos");
    let victim = fs::read_dir(&demos)
        .unwrap()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .min()
        .unwrap();
    let text = fs::read_to_string(&victim).unwrap();
    fs::write(&victim, &text[..text.find("Therefore").unwrap()]).unwrap();
    let out = ten(&["distill", "check-demos", "--dir", s(&demos)]);
    assert_ne!(out.status.code(), Some(0));
}
