use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use forge_cli::evaluate::ReportRow;
use forge_cli::pipeline::{CurationReport, EvalPrompt};
use forge_core::curate::sha256_hex;
use forge_core::eval::{EvalSample, METRIC_NAMES};
use forge_core::TaskKind;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn forge(args: &[&str], out: &Path, extra: &[&str]) -> Output {
    let config = workspace().join("configs/demo.json");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_forge"));
    cmd.args(args)
        .arg("--config")
        .arg(&config)
        .arg("--set")
        .arg(format!("paths.out_dir={}", serde_json::Value::String(out.display().to_string())));
    for e in extra {
        cmd.arg(e);
    }
    cmd.output().unwrap()
}

fn mock(out: &Path, cmd: &str, sets: &[&str]) -> Output {
    let mut extra = vec!["--backend", "mock"];
    for s in sets {
        extra.push("--set");
        extra.push(s);
    }
    forge(&[cmd], out, &extra)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pipeline_runs_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut hashes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        for cmd in ["formulate", "expand", "curate"] {
            let o = mock(&out, cmd, &[]);
            assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        }
        let bytes: Vec<Vec<u8>> = ["seeds.jsonl", "expanded.jsonl", "dataset.jsonl", "dataset.manifest.json"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        hashes.push(bytes.iter().map(|b| sha256_hex(b)).collect::<Vec<_>>());
        assert!(out.join("heldout_ads.jsonl").exists() && out.join("heldout_recommendation.jsonl").exists());
        assert!(!out.join(".forge.lock").exists());
        let v = mock(&out, "verify", &[]);
        assert_eq!(v.status.code(), Some(0), "{}", stderr(&v));
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn expanded_count_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(mock(out, "formulate", &[]).status.code(), Some(0));
    let o = mock(out, "expand", &["pipeline.variants.instruction_rewrite=2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let n = fs::read_to_string(out.join("expanded.jsonl")).unwrap().lines().count();
    // Text tasks gain 2 + 1 + 1 variants per seed, label tasks only 2.
    assert_eq!(n, 180 * (1 + 4) + 120 * (1 + 2));
    assert_eq!(fs::read_to_string(out.join("diagnostics.jsonl")).unwrap(), "");
}

#[test]
fn small_target_and_oversized_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    mock(out, "formulate", &[]);
    mock(out, "expand", &[]);
    let o = mock(out, "curate", &["pipeline.target_total=100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: CurationReport =
        serde_json::from_str(&fs::read_to_string(out.join("dataset.manifest.json")).unwrap()).unwrap();
    assert_eq!(report.manifest.count, 100);
    assert!(report.manifest.per_task.values().all(|&n| n == 20));

    let o = mock(out, "curate", &["pipeline.target_total=5000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("curate:") && stderr(&o).contains("needed"), "{}", stderr(&o));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = mock(dir.path(), "formulate", &["paths.data_in=/nonexistent/interactions.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ingest:") && stderr(&o).contains("/nonexistent/interactions.jsonl"), "{}", stderr(&o));

    let o = mock(dir.path(), "expand", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seeds.jsonl"), "{}", stderr(&o));
}

#[test]
fn malformed_lines_give_partial_exit() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("interactions.jsonl");
    let mut text = fs::read_to_string(workspace().join("data/demo/interactions.jsonl")).unwrap();
    text.push_str("{not json\n{\"id\": \"x\", \"title\": \"t\", \"taxonomy\": \"spaceships\", \"action\": \"click\"}\n");
    fs::write(&input, text).unwrap();
    let out = dir.path().join("out");
    let set = format!("paths.data_in={}", serde_json::Value::String(input.display().to_string()));
    let o = mock(&out, "formulate", &[&set]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let diags = fs::read_to_string(out.join("interactions.errors.jsonl")).unwrap();
    assert_eq!(diags.lines().count(), 2);
    assert_eq!(fs::read_to_string(out.join("seeds.jsonl")).unwrap().lines().count(), 300);
}

#[test]
fn unreachable_backend_fails_hard() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    mock(out, "formulate", &["pipeline.seed_per_task=1"]);
    let o = forge(
        &["expand"],
        out,
        &["--backend", "http", "--set", "pipeline.seed_per_task=1", "--set", "backend.base_url=http://127.0.0.1:1", "--set", "backend.max_retries=0"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("expand:") && stderr(&o).contains("transport"), "{}", stderr(&o));
}

#[test]
fn held_lock_blocks_a_second_command() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".forge.lock"), "1\n").unwrap();
    let o = mock(dir.path(), "formulate", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(".forge.lock"));
}

#[test]
fn verify_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    mock(out, "formulate", &[]);
    fs::write(out.join("seeds.jsonl"), "{}\n").unwrap();
    let o = mock(out, "verify", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seeds.jsonl"));
}

const TEXT: &str = "Himalayan pink salt lamp with a wooden base";

/// A five-sample reference set whose generations can match exactly.
fn smoke_dir(out: &Path) -> PathBuf {
    fs::create_dir_all(out).unwrap();
    let refs = [
        format!(r#"{{"id":"a","task":"ads_generation","title":"{TEXT}","description":"{TEXT}"}}"#),
        format!(r#"{{"id":"t","task":"title_rewriting","title":"{TEXT}","query":"{TEXT}"}}"#),
        r#"{"id":"c","task":"product_classification","gold":"home and living"}"#.to_string(),
        r#"{"id":"i","task":"intent_speculation","gold":"home and living"}"#.to_string(),
        format!(r#"{{"id":"q","task":"general_qa","answer":"{TEXT}"}}"#),
    ];
    for r in &refs {
        serde_json::from_str::<EvalSample>(r).unwrap();
    }
    fs::write(out.join("eval_references.jsonl"), refs.join("\n") + "\n").unwrap();
    let gens = out.join("gens");
    fs::create_dir_all(&gens).unwrap();
    for (task, id, g) in [
        ("ads_generation", "a", TEXT),
        ("title_rewriting", "t", TEXT),
        ("product_classification", "c", "Home & Living"),
        ("intent_speculation", "i", "home and living"),
        ("general_qa", "q", TEXT),
    ] {
        fs::write(gens.join(format!("{task}.jsonl")), format!("{{\"id\":\"{id}\",\"generation\":\"{g}\"}}\n")).unwrap();
    }
    gens
}

fn report(out: &Path) -> ReportRow {
    let rows: Vec<ReportRow> = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    rows.into_iter().next().unwrap()
}

#[test]
fn smoke_generations_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let gens = smoke_dir(out);
    let o = forge(&["evaluate"], out, &["--backend", "mock", "--generations", gens.to_str().unwrap(), "--model-name", "echo"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let row = report(out);
    for (name, v) in METRIC_NAMES.iter().zip(&row.report.values) {
        if *name != "PPL" {
            assert!((v.unwrap() - 100.0).abs() < 1e-9, "{name} = {v:?}");
        }
    }
    assert!(row.report.gm.is_some());
    let table = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(table.starts_with("Model") && table.lines().nth(1).unwrap().starts_with("echo"));
}

#[test]
fn missing_task_is_partial_and_misaligned_ids_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let gens = smoke_dir(out);
    fs::remove_file(gens.join("general_qa.jsonl")).unwrap();
    let o = forge(&["evaluate"], out, &["--backend", "mock", "--generations", gens.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let row = report(out);
    assert_eq!(row.report.missing_tasks, vec![TaskKind::GeneralQa]);
    assert_eq!(row.report.gm, None);

    fs::write(gens.join("ads_generation.jsonl"), "{\"id\":\"zzz\",\"generation\":\"x\"}\n").unwrap();
    let o = forge(&["evaluate"], out, &["--backend", "mock", "--generations", gens.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no generation for sample a"), "{}", stderr(&o));
}

#[test]
fn replay_reproduces_published_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let rows = workspace().join("data/replay/published_rows.jsonl");
    let o = forge(&["evaluate"], dir.path(), &["--backend", "mock", "--replay", rows.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.matches(" ok").count(), 11);

    // A row whose published aggregate is off must fail the run.
    let bad = dir.path().join("bad.jsonl");
    let first = fs::read_to_string(&rows).unwrap().lines().next().unwrap().replace("15.06", "14.06");
    fs::write(&bad, first + "\n").unwrap();
    let o = forge(&["evaluate"], dir.path(), &["--backend", "mock", "--replay", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("GPT-3.5"));
}

#[test]
fn eval_prompts_align_with_references() {
    let dir = tempfile::tempdir().unwrap();
    mock(dir.path(), "formulate", &[]);
    let load = |f: &str| fs::read_to_string(dir.path().join(f)).unwrap();
    let prompts: Vec<EvalPrompt> = load("eval_prompts.jsonl").lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let refs: Vec<EvalSample> = load("eval_references.jsonl").lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(prompts.len(), refs.len());
    for (p, r) in prompts.iter().zip(&refs) {
        assert_eq!(p.id, r.id);
        assert_eq!(p.task, r.reference.task());
    }
    let seeds = load("seeds.jsonl");
    for p in &prompts {
        let source = p.id.split_once('-').unwrap().1;
        assert!(!seeds.contains(&format!("-{source}\"")), "test item {} leaked into seeds", p.id);
    }
}

#[test]
fn lora_verify_and_human_eval() {
    let dir = tempfile::tempdir().unwrap();
    let o = mock(dir.path(), "lora-verify", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.matches("PASS").count(), 5);
    for n in ["8,388,608", "13,107,200", "25,559,040", "8.39m", "13.11m", "25.56m"] {
        assert!(stdout.contains(n), "{n} missing from {stdout}");
    }
    let o = mock(dir.path(), "lora-verify", &["lora.toy_lr=1000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("toy_fit"));

    let o = mock(dir.path(), "human-eval", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dup = dir.path().join("dup.jsonl");
    let text = fs::read_to_string(workspace().join("data/demo/ratings.jsonl")).unwrap();
    let first = text.lines().next().unwrap().to_string();
    fs::write(&dup, format!("{text}{first}\n")).unwrap();
    let o = forge(&["human-eval"], dir.path(), &["--backend", "mock", "--ratings", dup.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("more than once"));
}
