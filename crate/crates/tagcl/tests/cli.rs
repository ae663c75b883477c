//! End-to-end tests of the `tagcl` binary: dataset generation,
//! pretraining, evaluation, and the file formats they exchange.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tagcl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SYNTH_SPEC: &str = r#"{
  "classes": 3,
  "nodes_per_class": 25,
  "p_intra": 0.15,
  "p_inter": 0.02,
  "vocab_size": 40,
  "tokens_per_text": 6,
  "class_token_overlap": 0.2,
  "seed": 17
}"#;

const TRAIN_CONFIG: &str = r#"{
  "lr": 0.002,
  "epochs": 2,
  "batch_size": 16,
  "alpha": 0.5,
  "bank_capacity": 64,
  "neg_prompt_len": 4,
  "tune_steps": 5,
  "query_per_class": 5,
  "encoder": {
    "gcn_layers": 1,
    "gcn_hidden": 8,
    "embed_dim": 8,
    "token_dim": 8,
    "blocks": 1,
    "heads": 2,
    "ff_dim": 16,
    "max_seq_len": 12,
    "mean_pooling": false
  }
}"#;

/// Generate a dataset and pretrain a checkpoint under `root`; returns the
/// (data, ckpt) paths.
fn make_dataset_and_ckpt(root: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let spec = root.join("spec.json");
    fs::write(&spec, SYNTH_SPEC).unwrap();
    let data = root.join("data");
    let out = run(&[
        "gen-synthetic",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let cfg = root.join("train.json");
    fs::write(&cfg, TRAIN_CONFIG).unwrap();
    let ckpt = root.join("ckpt");
    let out = run(&[
        "pretrain",
        "--data",
        data.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    (data, ckpt)
}

#[test]
fn full_pipeline_generates_expected_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, ckpt) = make_dataset_and_ckpt(tmp.path());

    // Dataset files.
    for f in ["nodes.jsonl", "edges.tsv", "classes.json", "run_manifest.json"] {
        assert!(data.join(f).exists(), "missing {f}");
    }
    // Checkpoint files.
    for f in ["manifest.json", "params.bin", "trace.jsonl", "run_manifest.json"] {
        assert!(ckpt.join(f).exists(), "missing {f}");
    }
    // Every trace line parses and carries the loss fields.
    let trace = fs::read_to_string(ckpt.join("trace.jsonl")).unwrap();
    assert!(!trace.trim().is_empty());
    for line in trace.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["step", "L_CL", "L_PSM", "L_ML", "L_SO", "total", "tau"] {
            assert!(v.get(key).is_some(), "trace line missing {key}");
        }
    }

    // Few-shot eval with report and per-run predictions.
    let eval_dir = tmp.path().join("eval");
    let out = run(&[
        "eval-fewshot",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--way",
        "3",
        "--shot",
        "2",
        "--runs",
        "2",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("acc_mean="));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    for r in 0..2 {
        let preds = fs::read_to_string(eval_dir.join(format!("predictions_run{r}.jsonl"))).unwrap();
        for line in preds.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            for key in ["node_id", "true_label", "predicted", "p"] {
                assert!(v.get(key).is_some(), "prediction missing {key}");
            }
        }
    }

    // Zero-shot with probability averaging (checkpoint has alpha 0.5).
    let out = run(&[
        "eval-zeroshot",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--way",
        "3",
        "--runs",
        "2",
        "--probability-average",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    // Bank stats on the same checkpoint.
    let out = run(&["bank-stats", "--ckpt", ckpt.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("capacity=64"));
}

#[test]
fn pretrain_is_deterministic_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    fs::write(&spec, SYNTH_SPEC).unwrap();
    let data = tmp.path().join("data");
    assert!(run(&[
        "gen-synthetic",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ])
    .status
    .success());
    let cfg = tmp.path().join("train.json");
    fs::write(&cfg, TRAIN_CONFIG).unwrap();
    let mut bins = Vec::new();
    for name in ["a", "b"] {
        let out_dir = tmp.path().join(name);
        let out = run(&[
            "pretrain",
            "--data",
            data.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr_of(&out));
        bins.push(fs::read(out_dir.join("params.bin")).unwrap());
    }
    assert_eq!(bins[0], bins[1], "identical seeds must give identical bytes");
}

#[test]
fn shot_zero_redirects_to_zeroshot_command() {
    let out = run(&[
        "eval-fewshot",
        "--ckpt",
        "/nonexistent",
        "--data",
        "/nonexistent",
        "--way",
        "3",
        "--shot",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains("eval-zeroshot"), "{err}");
    assert_eq!(err.trim().lines().count(), 1, "single-line error: {err}");
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"lr": 0.1, "not_a_field": 3}"#).unwrap();
    let out = run(&[
        "pretrain",
        "--data",
        "/nonexistent",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("not_a_field"));
}

#[test]
fn non_empty_out_dir_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    fs::write(&spec, SYNTH_SPEC).unwrap();
    let data = tmp.path().join("data");
    let gen = |extra: &[&str]| {
        let mut args = vec![
            "gen-synthetic",
            "--spec",
            spec.to_str().unwrap(),
            "--out",
            data.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        run(&args)
    };
    assert!(gen(&[]).status.success());
    let out = gen(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--force"));
    assert!(gen(&["--force"]).status.success());
}

#[test]
fn out_dir_env_var_roots_relative_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    fs::write(&spec, SYNTH_SPEC).unwrap();
    let out = bin()
        .args(["gen-synthetic", "--spec", spec.to_str().unwrap(), "--out", "data-rel"])
        .env("TSA_OUT_DIR", tmp.path())
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(tmp.path().join("data-rel").join("nodes.jsonl").exists());
}

#[test]
fn grad_check_command_reports_groups() {
    let out = run(&["grad-check", "--alpha", "0.5"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    for group in [
        "graph_encoder",
        "text_encoder",
        "temperature",
        "negative_text_encoder",
        "negative_prompt",
    ] {
        assert!(text.contains(group), "missing {group} in:\n{text}");
    }
    assert!(text.contains("PASS"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn sweep_writes_csv_with_header() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, ckpt) = make_dataset_and_ckpt(tmp.path());
    let csv = tmp.path().join("sweep.csv");
    let out = run(&[
        "sweep",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--ways",
        "3",
        "--shots",
        "0,1",
        "--runs",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "way,shot,acc_mean,acc_std,f1_mean,f1_std"
    );
    assert_eq!(lines.count(), 2, "one row per way/shot combination");
}

#[test]
fn eval_is_idempotent_across_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, ckpt) = make_dataset_and_ckpt(tmp.path());
    let mut reports = Vec::new();
    for name in ["e1", "e2"] {
        let dir = tmp.path().join(name);
        let out = run(&[
            "eval-fewshot",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--way",
            "3",
            "--shot",
            "2",
            "--runs",
            "2",
            "--seed",
            "7",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr_of(&out));
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        reports.push(v);
    }
    assert_eq!(reports[0]["acc_mean"], reports[1]["acc_mean"]);
    assert_eq!(reports[0]["f1_mean"], reports[1]["f1_mean"]);
    assert_eq!(reports[0]["runs"], reports[1]["runs"]);
}
