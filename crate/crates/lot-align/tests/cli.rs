//! End-to-end checks of the command-line interface: the synth -> align and
//! train -> eval flows, and the exit-code contract (0 success, 1 validation
//! error, 2 runtime failure).

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lot-align"))
}

fn write_experiment_config(path: &Path) {
    std::fs::write(
        path,
        r#"{
  "version": 1,
  "protocol": "complete",
  "data": { "synthetic": { "num_classes": 2, "per_class": 15, "latent_dim": 3,
            "fundus_dim": 5, "oct_dim": 6, "seed": 21 } },
  "folds": 2,
  "seed": 13,
  "model": { "embed_dim": 5, "hidden_dim": 6 },
  "train": { "steps": 10, "batch_size": 8, "learning_rate": 0.005,
             "gw": { "outer_iters": 8, "inner": { "max_iters": 150, "marginal_tol": 1e-7 } } }
}"#,
    )
    .unwrap();
}

#[test]
fn synth_then_align_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{ "num_classes": 2, "per_class": 10, "latent_dim": 3, "fundus_dim": 5, "oct_dim": 6, "seed": 3 }"#,
    )
    .unwrap();
    let data = dir.path().join("data");
    let status = bin()
        .args(["synth", "--config", spec.to_str().unwrap(), "--out", data.to_str().unwrap(), "--quiet"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for file in ["fundus.txt", "oct.txt", "labels.txt"] {
        assert!(data.join(file).exists(), "{file} missing");
    }

    let out = dir.path().join("align");
    let status = bin()
        .args([
            "align",
            "--embeds-f",
            data.join("fundus.txt").to_str().unwrap(),
            "--embeds-o",
            data.join("oct.txt").to_str().unwrap(),
            "--labels",
            data.join("labels.txt").to_str().unwrap(),
            "--eps",
            "0.05",
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for file in [
        "t_c_fo.txt",
        "t_c_fo.txt.meta.json",
        "t_c_of.txt",
        "t_v.txt",
        "t_v.txt.meta.json",
        "proto_f.txt",
        "proto_o.txt",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }

    // labeled plans put zero mass across classes
    let plan = lot_align::io::read_matrix(&out.join("t_c_fo.txt")).unwrap();
    let labels = lot_align::io::read_labels(&data.join("labels.txt")).unwrap();
    for i in 0..plan.rows() {
        for j in 0..plan.cols() {
            if labels[i] != labels[j] {
                assert_eq!(plan[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    write_experiment_config(&config);

    let run = dir.path().join("run");
    let status = bin()
        .args(["train", "--config", config.to_str().unwrap(), "--out", run.to_str().unwrap(), "--quiet"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(run.join("model.ckpt").exists());
    assert!(run.join("model.ckpt.t_v.txt").exists());
    assert!(run.join("train_log.json").exists());

    let eval = dir.path().join("eval");
    let status = bin()
        .args([
            "eval",
            "--checkpoint",
            run.join("model.ckpt").to_str().unwrap(),
            "--protocol",
            "inter_missing",
            "--out",
            eval.to_str().unwrap(),
            "--quiet",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = std::fs::read_to_string(eval.join("report.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(value["protocol"], "inter_missing");
    assert!(eval.join("report.csv").exists());
    assert!(eval.join("run_info.json").exists());
}

#[test]
fn validation_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // unknown key in the config
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{ "version": 1, "protocol": "complete", "data": { "synthetic": {} }, "bogus": true }"#,
    )
    .unwrap();
    let status = bin()
        .args(["train", "--config", bad.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // unknown protocol name on eval
    let status = bin()
        .args([
            "eval",
            "--checkpoint",
            dir.path().join("none.ckpt").to_str().unwrap(),
            "--protocol",
            "nonsense",
            "--out",
            dir.path().join("y").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // bad CLI usage
    let status = bin().args(["synth"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn missing_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "align",
            "--embeds-f",
            dir.path().join("nope.txt").to_str().unwrap(),
            "--embeds-o",
            dir.path().join("nope2.txt").to_str().unwrap(),
            "--labels",
            dir.path().join("nope3.txt").to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn seed_override_changes_synth_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{ "num_classes": 2, "per_class": 5, "latent_dim": 2, "fundus_dim": 3, "oct_dim": 3, "seed": 1 }"#,
    )
    .unwrap();
    let run = |out: &Path, seed: Option<&str>| {
        let mut cmd = bin();
        cmd.args(["synth", "--config", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
        if let Some(s) = seed {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.status().unwrap().success());
        std::fs::read_to_string(out.join("fundus.txt")).unwrap()
    };
    let base = run(&dir.path().join("a"), None);
    let same = run(&dir.path().join("b"), None);
    let overridden = run(&dir.path().join("c"), Some("99"));
    assert_eq!(base, same);
    assert_ne!(base, overridden);
}
