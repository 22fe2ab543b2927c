use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_compstream"));
    c.env_remove("COMPSTREAM_SEED")
        .env_remove("COMPSTREAM_OUTPUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

/// A small planted stream with its generated config, trimmed for speed.
fn fixture(dir: &Path, seed: u64) -> PathBuf {
    let d = dir.to_str().unwrap();
    let seed = seed.to_string();
    ok(&[
        "synth",
        "--units-per-attr",
        "120",
        "--records",
        "3000",
        "--groups",
        "4",
        "--seed",
        &seed,
        "--out",
        d,
    ]);
    let path = dir.join("config.json");
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    cfg["train"] = serde_json::json!({"dim": 16, "epochs": 10});
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn error_line(out: &Output) -> Value {
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr);
    let last = line.lines().last().expect("an error line");
    serde_json::from_str(last).unwrap_or_else(|e| panic!("not JSON ({e}): {last}"))
}

#[test]
fn synth_is_reproducible_for_a_seed() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    fixture(a.path(), 5);
    fixture(b.path(), 5);
    fixture(c.path(), 6);
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    for f in ["synth.csv", "categories.csv", "config.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    assert_ne!(read(a.path(), "synth.csv"), read(c.path(), "synth.csv"));
}

#[test]
fn eval_reports_quality_and_bytes_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 1);
    let c = cfg.to_str().unwrap();
    let first = ok(&["eval", "compressed", "-c", c]);
    assert!(first["mrr"].as_f64().unwrap() > 0.0);
    assert!(first["model_bytes"].as_u64().unwrap() > 0);
    assert_eq!(first["model_bytes"], first["memory"]["total"]);
    assert_eq!(ok(&["eval", "compressed", "-c", c]), first);

    let out = dir.path().join("run");
    assert!(out.join("eval_compressed.csv").is_file());
    let resolved: Value =
        serde_json::from_str(&fs::read_to_string(out.join("config.resolved.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["seed"], 1);
    assert_eq!(resolved["cluster_fraction"], 0.01);
    assert!(resolved["compression"]["lambda"].is_number());

    for model in ["dim-reduct", "quantize", "hash-trick"] {
        let r = ok(&["eval", model, "-c", c]);
        assert!(r["mrr"].as_f64().unwrap() > 0.0, "{model}");
        assert!(r["model_bytes"].as_u64().unwrap() > 0, "{model}");
    }
}

#[test]
fn pretrain_stream_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 2);
    let c = cfg.to_str().unwrap();
    let info = ok(&["inspect", "-c", c]);
    let out = dir.path().join("run");
    assert_eq!(info["attributes"][0]["units"], 120);
    let novelty = fs::read_to_string(out.join("novelty_a0.csv")).unwrap();
    assert!(novelty.lines().nth(1).unwrap().ends_with(",1"), "{novelty}");

    let pre = ok(&["pretrain", "-c", c]);
    assert!(out.join("model.bin").is_file());
    assert!(pre["memory"]["ratio"].as_f64().unwrap() > 0.0);

    let streamed = ok(&["stream", "-c", c, "--p", "2"]);
    let lines = fs::read_to_string(out.join("windows.jsonl")).unwrap();
    assert_eq!(
        lines.lines().count() as u64,
        streamed["windows"].as_u64().unwrap()
    );
    assert_eq!(streamed["workers"], 2);
    assert!(out.join("model.streamed.bin").is_file());

    // Quality with four workers stays close to the sequential run.
    let p1 = ok(&["eval", "compressed", "-c", c, "--p", "1"])["mrr"]
        .as_f64()
        .unwrap();
    let p4 = ok(&["eval", "compressed", "-c", c, "--p", "4"])["mrr"]
        .as_f64()
        .unwrap();
    assert!(p4 >= 0.9 * p1, "p4 {p4} vs p1 {p1}");

    let rows = ok(&["bench", "-c", c, "--ps", "1,2"]);
    assert_eq!(rows.as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(csv.starts_with("p,ms_per_record,mrr\n"));
    let err = error_line(&run(&["bench", "-c", c, "--ps", "2,2"]));
    assert!(err["message"].as_str().unwrap().contains("two distinct"));
}

#[test]
fn flags_and_environment_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 3);
    let c = cfg.to_str().unwrap();
    let elsewhere = dir.path().join("other");
    let out = bin()
        .args(["inspect", "-c", c])
        .env("COMPSTREAM_OUTPUT_DIR", &elsewhere)
        .env("COMPSTREAM_SEED", "44")
        .output()
        .unwrap();
    assert!(out.status.success());
    let resolved = |d: &Path| -> Value {
        serde_json::from_str(&fs::read_to_string(d.join("config.resolved.json")).unwrap()).unwrap()
    };
    assert_eq!(resolved(&elsewhere)["seed"], 44);

    // A flag beats the environment.
    let out = bin()
        .args(["inspect", "-c", c, "--seed", "45"])
        .env("COMPSTREAM_SEED", "44")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(resolved(&dir.path().join("run"))["seed"], 45);
}

#[test]
fn bad_input_gives_a_json_error_and_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 4);
    let text = fs::read_to_string(&cfg).unwrap();
    let mut doc: Value = serde_json::from_str(&text).unwrap();

    doc.as_object_mut().unwrap().remove("seed");
    let no_seed = dir.path().join("no_seed.json");
    fs::write(&no_seed, doc.to_string()).unwrap();
    let err = error_line(&run(&["inspect", "-c", no_seed.to_str().unwrap()]));
    assert_eq!(err["error"], "failed");
    assert!(err["causes"].to_string().contains("seed"), "{err}");

    doc["seed"] = 1.into();
    doc["pretrain_fraction"] = 1.5.into();
    let bad_fraction = dir.path().join("bad_fraction.json");
    fs::write(&bad_fraction, doc.to_string()).unwrap();
    let err = error_line(&run(&["inspect", "-c", bad_fraction.to_str().unwrap()]));
    assert!(err["message"]
        .as_str()
        .unwrap()
        .contains("pretrain_fraction"));

    doc["pretrain_fraction"] = 0.5.into();
    doc["dataset"] = "missing.csv".into();
    let missing = dir.path().join("missing.json");
    fs::write(&missing, doc.to_string()).unwrap();
    let err = error_line(&run(&["inspect", "-c", missing.to_str().unwrap()]));
    assert!(err["message"].as_str().unwrap().contains("does not exist"));

    let err = error_line(&run(&["stream", "-c", cfg.to_str().unwrap()]));
    assert!(err["message"].as_str().unwrap().contains("pretrain"));

    let usage = run(&["eval", "nonsense", "-c", cfg.to_str().unwrap()]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(error_line(&usage)["error"], "usage");
}
