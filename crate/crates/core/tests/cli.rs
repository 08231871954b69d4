use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
  "seed": 1,
  "synth": { "n_clips": 10, "frames": 16 },
  "vq": { "codebook_size": 16, "code_dim": 8, "hidden_dim": 8, "layers": 1, "heads": 2,
          "intermediate": 16, "learning_rate": 0.001, "steps": 10, "batch_size": 4 },
  "dim": { "model_dim": 8, "layers": 1, "heads": 2, "intermediate": 16,
           "learning_rate": 0.001, "epochs": 2, "batch_size": 4 },
  "finetune": { "learning_rate": 0.001, "epochs": 2, "batch_size": 4 },
  "metrics": { "kmeans_k_expr": 3, "kmeans_k_pose": 2 },
  "ablation": { "repeats": 1 }
}"#;

fn dim(root: &Path, args: &[&str]) -> Output {
    let cfg = root.join("tiny.json");
    if !cfg.exists() {
        std::fs::create_dir_all(root).unwrap();
        std::fs::write(&cfg, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_dim"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(root)
        .arg("--no-plots")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn config_errors_exit_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"dim\": {\n    \"epochz\": 3\n  }\n}").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dim"))
        .args(["--config", cfg.to_str().unwrap(), "synth"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.json:3:"), "{}", stderr(&out));

    let out = dim(dir.path(), &["--set", "vq.codebook_size=0", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    let out = dim(dir.path(), &["--set", "novalue", "synth"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_prerequisites_exit_3_and_name_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dim(dir.path(), &["pretrain"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("dim synth"), "{}", stderr(&out));
    ok(dim(dir.path(), &["synth"]));
    let out = dim(dir.path(), &["pretrain"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("train-vq"), "{}", stderr(&out));
}

#[test]
fn ground_truth_scores_zero_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    ok(dim(dir.path(), &["synth"]));
    let test_dir = dir.path().join("data/test");
    let json = ok(dim(dir.path(), &["evaluate", test_dir.to_str().unwrap(), "--split", "test"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in ["fd_exp", "fd_pose", "pfd_exp", "mse_exp", "mse_pose", "rpcc_exp", "lve"] {
        assert!(v[key].as_f64().unwrap().abs() < 1e-6, "{key} = {}", v[key]);
    }
}

#[test]
fn pipeline_is_deterministic_and_guards_data_changes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let table_a = ok(dim(a.path(), &["pipeline"]));
    let table_b = ok(dim(b.path(), &["pipeline"]));
    assert_eq!(table_a, table_b);
    for method in ["dim", "random", "nearest", "mirror"] {
        let sub = format!("out/generated/{method}_listener_test");
        let (fa, fb) = (files(&a.path().join(&sub)), files(&b.path().join(&sub)));
        assert!(!fa.is_empty());
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(x.file_name(), y.file_name());
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
        }
    }
    for (x, y) in files(&a.path().join("out/reports")).iter().zip(files(&b.path().join("out/reports"))) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }

    ok(dim(a.path(), &["--set", "synth.seed=99", "synth"]));
    let out = dim(a.path(), &["generate"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    ok(dim(a.path(), &["--force", "generate"]));
}
