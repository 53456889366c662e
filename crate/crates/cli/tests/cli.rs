//! End-to-end runs of the `pcgat` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pcgat::SystemConfig;

const TINY: [&str; 8] = ["--set", "aps=6", "--set", "k_max=5", "--set", "k_min=3", "--set", "pilot_len=3"];

fn pcgat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcgat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn ok(args: &[&str]) -> Output {
    let o = pcgat(args);
    assert_eq!(code(&o), 0, "{args:?}\nstderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate_tiny(dir: &Path, name: &str, seed: &str, count: &str) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["generate", "--count", count, "--seed", seed, "--out", s(&out)];
    args.extend(TINY);
    ok(&args);
    out.join("dataset.bin")
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate_tiny(dir.path(), "a", "7", "30");
    let b = generate_tiny(dir.path(), "b", "7", "30");
    let c = generate_tiny(dir.path(), "c", "8", "30");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    let ma: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["settings_hash"], mb["settings_hash"]);
    assert_eq!(ma["artifacts"], serde_json::json!(["dataset.bin"]));
    assert_eq!(ma["effective_config"]["aps"], 6);
}

#[test]
fn dataset_regenerates_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let first = generate_tiny(dir.path(), "a", "3", "12");
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    let cfg: SystemConfig = serde_json::from_value(manifest["effective_config"].clone()).unwrap();
    let toml_path = dir.path().join("cfg.toml");
    std::fs::write(&toml_path, toml::to_string(&cfg).unwrap()).unwrap();
    let out = dir.path().join("again");
    let seed = manifest["seed"].to_string();
    let count = manifest["settings"]["count"].to_string();
    ok(&["generate", "--config", s(&toml_path), "--seed", &seed, "--count", &count, "--out", s(&out)]);
    assert_eq!(std::fs::read(first).unwrap(), std::fs::read(out.join("dataset.bin")).unwrap());
}

#[test]
fn full_pipeline_on_a_tiny_system() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_tiny(dir.path(), "gen", "1", "24");
    let train = dir.path().join("train");
    ok(&["train", "--dataset", s(&data), "--epochs", "1", "--batch-size", "8", "--out", s(&train)]);
    let ckpt = train.join("checkpoint.bin");
    assert!(ckpt.exists() && train.join("train_log.csv").exists());

    let eval = dir.path().join("eval");
    let o = ok(&["eval", "--dataset", s(&data), "--checkpoint", s(&ckpt), "--sigma", "0.5", "--out", s(&eval)]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("apg") && stdout.contains("gat"));
    let files: Vec<String> = std::fs::read_dir(&eval)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(files.iter().any(|f| f.ends_with("_sigma0.5_se.csv")));
    assert!(files.iter().any(|f| f.ends_with("_sigma0.5_summary.csv")));
    assert!(files.contains(&"manifest.json".to_string()));

    let apg = dir.path().join("apg");
    ok(&["apg", "--dataset", s(&data), "--out", s(&apg)]);
    let powers = pcgat::dataset::read_power_archive(&apg.join("powers.bin"), 4).unwrap();
    assert_eq!(powers.len(), 24);
    let summary = std::fs::read_to_string(apg.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 25);

    let bench = dir.path().join("bench");
    ok(&["bench", "--dataset", s(&data), "--checkpoint", s(&ckpt), "--count", "3", "--out", s(&bench)]);
    let csv = std::fs::read_dir(&bench)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("_bench.csv"))
        .unwrap();
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 3);
}

#[test]
fn checkpoint_for_other_ap_count_is_a_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("s1");
    ok(&["generate", "--scenario", "1", "--count", "4", "--out", s(&small)]);
    let train = dir.path().join("train");
    ok(&["train", "--dataset", s(&small.join("dataset.bin")), "--epochs", "0", "--out", s(&train)]);
    let big = dir.path().join("s2");
    ok(&["generate", "--scenario", "2", "--count", "2", "--out", s(&big)]);
    let o = pcgat(&[
        "eval",
        "--dataset",
        s(&big.join("dataset.bin")),
        "--checkpoint",
        s(&train.join("checkpoint.bin")),
        "--out",
        s(&dir.path().join("eval")),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn error_categories_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = |n: &str| dir.path().join(n).to_string_lossy().into_owned();

    assert_eq!(code(&pcgat(&["generate", "--bogus", "--out", &out("a")])), 2);
    assert_eq!(code(&pcgat(&["generate", "--set", "nope=1", "--out", &out("b")])), 2);
    assert_eq!(code(&pcgat(&["generate", "--scenario", "9", "--out", &out("c")])), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "aps = \"many\"\n").unwrap();
    assert_eq!(code(&pcgat(&["generate", "--config", s(&bad), "--out", &out("d")])), 2);
    assert_eq!(code(&pcgat(&["generate", "--config", &out("missing.toml"), "--out", &out("e")])), 5);

    let data = generate_tiny(dir.path(), "gen", "0", "6");
    let f32 = pcgat(&["train", "--dataset", s(&data), "--precision", "f32", "--out", &out("f")]);
    assert_eq!(code(&f32), 2);

    // outputs are write-once
    assert_eq!(code(&pcgat(&["generate", "--count", "2", "--out", &out("gen")])), 5);

    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"garbage").unwrap();
    assert_eq!(code(&pcgat(&["apg", "--dataset", s(&junk), "--out", &out("g")])), 5);
}

#[test]
fn validate_reports_channel_statistics_and_properties() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = ok(&["validate", "--trials", "20000", "--count", "3", "--out", s(&out)]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("estimate mean square"));
    assert!(!stdout.contains("FAILED"));
    let stats = std::fs::read_to_string(out.join("channel_stats.csv")).unwrap();
    // 4 APs x 6 UEs mean-square rows plus 4 x 10 pilot-sharing pairs
    assert_eq!(stats.lines().count(), 1 + 24 + 40);
    assert!(out.join("properties.csv").exists() && out.join("manifest.json").exists());
}
