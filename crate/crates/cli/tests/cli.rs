use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn heartscape(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heartscape"))
        .current_dir(cwd)
        .args(args)
        .env_remove("EVAL_ENDPOINT")
        .env_remove("EVAL_TOKEN")
        .env_remove("EVAL_MODEL")
        .output()
        .unwrap()
}

fn files_under(root: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_manifest_hashes(manifest: &Value, base: &Path) {
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for rec in outputs {
        let bytes = std::fs::read(base.join(rec["path"].as_str().unwrap())).unwrap();
        assert_eq!(rec["bytes"].as_u64().unwrap(), bytes.len() as u64);
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(rec["sha256"].as_str().unwrap(), digest);
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = heartscape(tmp.path(), &["generate", "--frobnicate", "--out", "rr.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--frobnicate") && err.contains("Usage"), "{err}");
    assert!(out.stdout.is_empty());
    assert!(files_under(tmp.path()).is_empty());
}

#[test]
fn help_exits_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = heartscape(tmp.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("pipeline"));
}

#[test]
fn generate_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = heartscape(tmp.path(), &["generate", "--days", "1", "--seed", "42", "--out", "rr.csv", "--hr"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = files_under(tmp.path());
    let names: Vec<&str> = files.iter().map(|p| p.to_str().unwrap()).collect();
    assert_eq!(names, ["rr.csv", "rr.manifest.json", "rr_hr.csv"]);
    let manifest = read_json(&tmp.path().join("rr.manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config"]["generator"]["days"], 1);
    assert_manifest_hashes(&manifest, tmp.path());

    let again = heartscape(tmp.path(), &["generate", "--days", "1", "--seed", "42", "--out", "again.csv"]);
    assert!(again.status.success());
    assert_eq!(
        std::fs::read(tmp.path().join("rr.csv")).unwrap(),
        std::fs::read(tmp.path().join("again.csv")).unwrap()
    );
}

#[test]
fn subcommands_write_only_under_out() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path().join("cwd");
    std::fs::create_dir(&cwd).unwrap();
    let gen = heartscape(&cwd, &["generate", "--days", "1", "--out", "../in/rr.csv"]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let input = tmp.path().join("in/rr.csv");
    let before = files_under(tmp.path());

    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("metrics", vec!["--out", "m/features.csv", "--standardize"]),
        ("heatmap", vec!["--metric", "rmssd-ms"]),
        ("clock", vec!["--day", "1"]),
        ("recurrence", vec!["--max-points", "400", "--graded"]),
        ("spectrogram", vec![]),
        ("poincare", vec!["--level", "0.9"]),
        ("tsne", vec!["--perplexity", "10", "--iterations", "250", "--max-rows", "300"]),
    ];
    for (cmd, extra) in runs {
        let out_dir = tmp.path().join("out").join(cmd);
        let target = if cmd == "metrics" {
            out_dir.join("features.csv")
        } else {
            out_dir.clone()
        };
        let mut args = vec![cmd, "--input", input.to_str().unwrap(), "--out", target.to_str().unwrap()];
        args.extend(extra.iter().filter(|a| **a != "--out" && **a != "m/features.csv"));
        let out = heartscape(&cwd, &args);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let after = files_under(tmp.path());
        let new: Vec<_> = after.difference(&before).collect();
        let prefix = Path::new("out").join(cmd);
        assert!(new.iter().all(|p| p.starts_with(&prefix)), "{cmd} wrote {new:?}");
        let manifest = if cmd == "metrics" {
            out_dir.join("features.manifest.json")
        } else {
            out_dir.join("manifest.json")
        };
        let manifest = read_json(&manifest);
        assert_eq!(manifest["command"], cmd);
        assert_eq!(manifest["inputs"][0], input.to_str().unwrap());
        assert_manifest_hashes(&manifest, &out_dir);
        std::fs::remove_dir_all(tmp.path().join("out")).unwrap();
    }
    assert!(files_under(&cwd).is_empty());
}

#[test]
fn recurrence_json_reports_calibrated_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = heartscape(
        tmp.path(),
        &["recurrence", "--days", "1", "--max-points", "500", "--target-rate", "0.05", "--out", "r"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = read_json(&tmp.path().join("r/recurrence.json"));
    let rate = rec["rate"].as_f64().unwrap();
    assert!((rate - 0.05).abs() <= 0.005, "{rate}");
    let svg = std::fs::read_to_string(tmp.path().join("r/recurrence.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("run.toml"),
        "[generator]\ndays = 1\nseed = 9\n\n[spectral]\nwindow_s = 120.0\nstep_s = 60.0\n",
    )
    .unwrap();
    let out = heartscape(tmp.path(), &["--config", "run.toml", "spectrogram", "--step-s", "120", "--out", "s"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(&tmp.path().join("s/manifest.json"));
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["spectral"]["window_s"], 120.0);
    assert_eq!(manifest["config"]["spectral"]["step_s"], 120.0);

    std::fs::write(tmp.path().join("bad.toml"), "[generator]\nnot_a_field = 1\n").unwrap();
    let bad = heartscape(tmp.path(), &["--config", "bad.toml", "poincare", "--out", "p"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(!tmp.path().join("p").exists());
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("junk.csv"), "this,is\nnot,rr data\n").unwrap();
    let out = heartscape(tmp.path(), &["poincare", "--input", "junk.csv", "--out", "p"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let missing = heartscape(tmp.path(), &["poincare", "--input", "nope.csv", "--out", "p"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn evaluate_requires_a_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let out = heartscape(tmp.path(), &["evaluate", "--out", "e"]);
    assert_eq!(out.status.code(), Some(2));
    // Network mode without an endpoint is a configuration problem, not a transport failure.
    let images = tmp.path().join("img");
    std::fs::create_dir(&images).unwrap();
    let net = heartscape(tmp.path(), &["evaluate", "--network", "--images", "img", "--out", "e"]);
    assert_eq!(net.status.code(), Some(2), "{}", String::from_utf8_lossy(&net.stderr));
    assert!(!tmp.path().join("e").exists());
}

#[test]
fn offline_evaluate_then_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/appendixD.json");
    let ev = heartscape(tmp.path(), &["evaluate", "--offline", fixture.to_str().unwrap(), "--out", "ev"]);
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    let responses = read_json(&tmp.path().join("ev/responses.json"));
    assert_eq!(responses.as_array().unwrap().len(), 20);
    assert_eq!(read_json(&tmp.path().join("ev/manifest.json"))["config"]["model"], "offline-fixture");

    let ver = heartscape(tmp.path(), &["verify", "--responses", "ev/responses.json", "--out", "ver"]);
    assert!(ver.status.success(), "{}", String::from_utf8_lossy(&ver.stderr));
    let md = std::fs::read_to_string(tmp.path().join("ver/verification.md")).unwrap();
    assert!(md.contains("| Marcus Thompson | heatmap | beauvis | BeauVis | 4.6 | 4.4 | MISMATCH |"));
    let report = read_json(&tmp.path().join("ver/verification.json"));
    assert_eq!(report["cells"].as_array().unwrap().len(), 20);

    std::fs::write(tmp.path().join("partial.json"), "[]").unwrap();
    let partial = heartscape(tmp.path(), &["verify", "--responses", "partial.json", "--out", "v2"]);
    assert_eq!(partial.status.code(), Some(3));
}

#[test]
fn clock_day_counts_from_one() {
    let tmp = tempfile::tempdir().unwrap();
    let zero = heartscape(tmp.path(), &["clock", "--days", "2", "--day", "0", "--out", "c"]);
    assert_eq!(zero.status.code(), Some(2));
    let two = heartscape(tmp.path(), &["clock", "--days", "2", "--day", "2", "--out", "c"]);
    assert!(two.status.success(), "{}", String::from_utf8_lossy(&two.stderr));
    assert!(tmp.path().join("c/clock/day_2.svg").is_file());
    assert!(!tmp.path().join("c/clock/day_1.svg").exists());
}
