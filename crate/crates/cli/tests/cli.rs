use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_night2day"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the parsed single-line error object.
fn err(args: &[&str], cwd: &Path) -> (i32, serde_json::Value) {
    let out = run(args, cwd);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(
        lines.len(),
        1,
        "expected one diagnostic line, got {stderr:?}"
    );
    (
        out.status.code().unwrap(),
        serde_json::from_str(lines[0]).unwrap(),
    )
}

const TINY: &str = r#"{
  "image_size": 32,
  "inpainter": {
    "hyperparams": {
      "image_size": 32,
      "edge": {"generator": {"base_channels": 4, "downsamples": 1, "res_blocks": 1}, "disc_channels": 4},
      "inpaint": {"generator": {"base_channels": 4, "downsamples": 1, "res_blocks": 1}, "disc_channels": 4}
    },
    "batch_size": 2,
    "steps": {"edge": 3, "inpaint": 3, "joint": 2}
  },
  "translator": {
    "hyperparams": {
      "image_size": 32,
      "generator": {"base_channels": 4, "downsamples": 1, "res_blocks": 1},
      "disc_channels": 4, "num_patches": 16, "nce_dim": 8
    },
    "steps": 4
  }
}"#;

fn setup(pairs: usize) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    std::fs::write(root.join("tiny.json"), TINY).unwrap();
    ok(
        &[
            "synth",
            "--out",
            "data",
            "--pairs",
            &pairs.to_string(),
            "--masks",
            "6",
            "--size",
            "32",
        ],
        &root,
    );
    (dir, root)
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn prepare_splits_ten_pairs() {
    let (_d, root) = setup(10);
    let out = ok(
        &[
            "prepare",
            "--run-dir",
            "run",
            "--images",
            "data/pairs",
            "--masks",
            "data/masks",
            "--config",
            "tiny.json",
        ],
        &root,
    );
    assert!(out.contains("train 8 / val 1 / test 1"), "{out}");
    let m = read_json(&root.join("run/manifest.json"));
    assert_eq!(m["splits"]["train"].as_array().unwrap().len(), 8);
    assert_eq!(m["image_size"], 32);
    assert_eq!(m["mask_assignment"].as_object().unwrap().len(), 10);
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn train_evaluate_compare_and_reproduce() {
    let (_d, root) = setup(20);
    ok(
        &[
            "prepare",
            "--run-dir",
            "a",
            "--images",
            "data/pairs",
            "--masks",
            "data/masks",
            "--config",
            "tiny.json",
        ],
        &root,
    );
    for run in ["a", "b"] {
        ok(
            &[
                "train",
                "--run-dir",
                run,
                "--manifest",
                "a/manifest.json",
                "--config",
                "tiny.json",
                "--order",
                "m1",
            ],
            &root,
        );
        ok(&["infer", "--run-dir", run], &root);
        ok(&["evaluate", "--run-dir", run], &root);
    }
    let summary = read_json(&root.join("a/reports/summary.json"));
    for phase in ["pre", "intermediate", "post"] {
        for metric in ["rmse", "mae", "ssim", "ncc"] {
            assert!(
                summary["phases"][phase][metric]["mean"].is_f64(),
                "{phase}/{metric}"
            );
            assert!(summary["phases"][phase][metric]["std"].is_f64());
        }
        assert!(summary["phases"][phase]["fid"].is_f64(), "{phase} fid");
    }
    for metric in ["rmse", "mae", "ssim", "ncc"] {
        assert!(root
            .join(format!("a/reports/histogram_{metric}.png"))
            .exists());
    }

    // Identical config and seeds: identical artifacts.
    let a_files = files_under(&root.join("a"));
    let b_files = files_under(&root.join("b"));
    assert_eq!(a_files.len(), b_files.len());
    for (fa, fb) in a_files.iter().zip(&b_files) {
        assert_eq!(
            fa.strip_prefix(root.join("a")).unwrap(),
            fb.strip_prefix(root.join("b")).unwrap()
        );
        assert_eq!(
            std::fs::read(fa).unwrap(),
            std::fs::read(fb).unwrap(),
            "{}",
            fa.display()
        );
    }

    let out = ok(&["compare", "--run-dir", "cmp", "a", "b"], &root);
    assert_eq!(out.lines().count(), 5);
    let cmp = read_json(&root.join("cmp/comparison.json"));
    for v in cmp["verdicts"].as_array().unwrap() {
        assert_eq!(v["winner"], "tie");
    }

    // The written config is itself a valid input config.
    ok(
        &[
            "train",
            "--run-dir",
            "c",
            "--manifest",
            "a/manifest.json",
            "--config",
            "a/config.json",
        ],
        &root,
    );
    assert_eq!(
        std::fs::read(root.join("a/config.json")).unwrap(),
        std::fs::read(root.join("c/config.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(root.join("a/stage2/checkpoint.safetensors")).unwrap(),
        std::fs::read(root.join("c/stage2/checkpoint.safetensors")).unwrap()
    );

    let out = ok(
        &["ablate", "--run-dir", "a", "--max-iterations", "2"],
        &root,
    );
    assert!(out.starts_with("k=0"), "{out}");
    assert!(root.join("a/ablation/ablation.csv").exists());
    assert!(root.join("a/ablation/ablation_grid.png").exists());
}

#[test]
fn failures_have_distinct_codes_and_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("bad.json"), r#"{"inpainter": {"stepz": 1}}"#).unwrap();

    let (usage, e) = err(&["train", "--run-dir", "r", "--no-such-flag"], root);
    assert_eq!(e["error"]["category"], "usage");
    let (config, e) = err(
        &[
            "train",
            "--run-dir",
            "r",
            "--set",
            "translator.missing_key=1",
        ],
        root,
    );
    assert_eq!(e["error"]["category"], "config");
    assert!(e["error"]["message"]
        .as_str()
        .unwrap()
        .contains("translator.missing_key"));
    let (config_file, _) = err(&["train", "--run-dir", "r", "--config", "bad.json"], root);
    let (artifact, e) = err(&["evaluate", "--run-dir", "nowhere"], root);
    assert_eq!(e["error"]["category"], "artifact");
    let (missing_manifest, _) = err(&["train", "--run-dir", "r"], root);

    assert_eq!(config, config_file);
    assert_eq!(artifact, missing_manifest);
    let mut codes = vec![usage, config, artifact];
    codes.sort();
    codes.dedup();
    assert_eq!(codes.len(), 3);
    assert!(codes.iter().all(|&c| c != 0));
    assert_eq!(e["error"]["code"], artifact);
}
