use std::path::Path;
use std::process::{Command, Output};

fn nolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nolab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn gen(dir: &Path, name: &str, seed: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = nolab(&[
        "gen-data",
        "--target",
        "bessel-inverse",
        "--grid",
        "32",
        "--n-samples",
        "8",
        "--seed",
        seed,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn gen_data_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.bin", "1");
    let b = gen(dir.path(), "b.bin", "1");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn gen_data_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = nolab(&["gen-data", "--target", "bessel-inverse", "--grid", "64", "--n-samples", "8"]);
    assert_eq!(code(&o), 2);
    let out = dir.path().join("x.bin");
    let o = nolab(&[
        "gen-data", "--target", "bessel-inverse", "--grid", "100", "--n-samples", "8", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const TRAIN: &str = r#"{
  "width": 2, "layers": 1, "kernel": {"type": "spectral", "k_max": 4},
  "activation": "tanh", "init_seed": 3,
  "train": {"steps": 20, "batch_size": 8, "learning_rate": LR}
}"#;

#[test]
fn train_writes_checkpoint_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", "2");
    let cfg = write(dir.path(), "t.json", &TRAIN.replace("LR", "0.0"));
    let run = |name: &str| {
        let sub = dir.path().join(name);
        std::fs::create_dir_all(&sub).unwrap();
        let ck = sub.join("op.ckpt");
        let o = nolab(&[
            "train", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out",
            ck.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(&ck).unwrap(), std::fs::read_to_string(sub.join("history.csv")).unwrap())
    };
    let (ck1, hist) = run("one");
    let (ck2, _) = run("two");
    assert_eq!(ck1, ck2);
    let losses: Vec<&str> = hist.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(losses.len(), 20);
    assert!(losses.iter().all(|l| *l == losses[0]));
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", "2");
    let cfg = write(dir.path(), "bad.json", "{\n  \"width\": 2,\n  \"layers\": ,\n}");
    let ck = dir.path().join("op.ckpt");
    let o = nolab(&[
        "train", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", ck.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn divergence_exits_one_with_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", "2");
    let text = TRAIN.replace("LR", "1e6").replace("\"learning_rate\"", "\"optimizer\": {\"kind\": \"sgd\"}, \"learning_rate\"");
    let cfg = write(dir.path(), "t.json", &text.replace("\"steps\": 20", "\"steps\": 500"));
    let ck = dir.path().join("op.ckpt");
    let o = nolab(&[
        "train", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", ck.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("history.csv").exists());
    assert!(!ck.exists());
}

#[test]
fn verify_contraction_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = nolab(&["verify", "contraction", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("contraction.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "pass");
    assert!(report["series"].as_object().unwrap().keys().any(|k| k.contains("envelope")));
}

#[test]
fn verify_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = nolab(&["verify", "telepathy", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("contraction"));
    let cfg = write(dir.path(), "c.json", r#"{"steps": 3, "stpes": 4}"#);
    let o = nolab(&["verify", "flow", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stpes"));
}

#[test]
fn verify_with_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", "5");
    let cfg = write(dir.path(), "t.json", &TRAIN.replace("LR", "0.01"));
    let ck = dir.path().join("op.ckpt");
    let o = nolab(&[
        "train", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", ck.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let vc = write(dir.path(), "s.json", r#"{"trials": 100, "adversarial_steps": 5}"#);
    let out = dir.path().join("out");
    let o = nolab(&[
        "verify", "stability", "--config", vc.to_str().unwrap(), "--model", ck.to_str().unwrap(), "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_requires_three_sizes() {
    let o = nolab(&["bench", "--kernel", "spectral", "--sizes", "256,512", "--reps", "20"]);
    assert_eq!(code(&o), 2);
    let o = nolab(&["bench", "--kernel", "fft", "--sizes", "256,512,1024"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bench_single_rep_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = nolab(&[
        "bench", "--kernel", "spectral", "--sizes", "64,128,256", "--reps", "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["status"], "inconclusive");
    let csv = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "N,median_ms");
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn thread_env_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_nolab"))
        .args(["bench", "--kernel", "dense", "--sizes", "8,16,32", "--reps", "1"])
        .env("NOLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
