use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use texcal_core::io::{read_logits, read_sweep};

const TINY: &str = r#"
root_seed = 3
variants = ["I", "II"]

[dataset]
image_size = 32

[model]
input_size = 16
channels = [4, 6]
dilations = [1, 2]

[train]
epochs = 2
batch_size = 16

[binning]
m = 10
"#;

fn texcal(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.toml");
    if !cfg.exists() {
        fs::write(&cfg, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_texcal"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout:\n{stdout}\nstderr:\n{}", String::from_utf8_lossy(&out.stderr));
    stdout
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tree_hash(root: &Path) -> String {
    fn walk(dir: &Path, files: &mut Vec<PathBuf>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, files);
            } else {
                files.push(p);
            }
        }
    }
    let mut files = Vec::new();
    walk(root, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update(fs::read(&f).unwrap());
    }
    format!("{:x}", h.finalize())
}

#[test]
fn gen_reports_counts_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&texcal(dir.path(), &["gen"]));
    assert!(stdout.contains("samples        229"), "{stdout}");
    assert!(stdout.contains("train / test   182 / 47"), "{stdout}");
    assert!(stdout.contains("expanded test  188"), "{stdout}");
    let first = tree_hash(&dir.path().join("out/data"));

    let again = texcal(dir.path(), &["gen"]);
    assert_eq!(again.status.code(), Some(8));
    assert!(stderr(&again).contains("--force"), "{}", stderr(&again));

    ok(&texcal(dir.path(), &["gen", "--force"]));
    assert_eq!(tree_hash(&dir.path().join("out/data")), first);

    let other = tempfile::tempdir().unwrap();
    ok(&texcal(other.path(), &["gen"]));
    assert_eq!(tree_hash(&other.path().join("out/data")), first);
    ok(&texcal(other.path(), &["gen", "--force", "--seed", "4"]));
    assert_ne!(tree_hash(&other.path().join("out/data")), first);

    let echo = fs::read_to_string(dir.path().join("out/config.effective.toml")).unwrap();
    assert!(echo.contains("image_size = 32") && echo.contains("learning_rate"), "{echo}");
    assert!(dir.path().join("out/run_info.json").is_file());
}

#[test]
fn missing_prerequisites_name_the_command_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let train = texcal(dir.path(), &["train", "--variant", "I"]);
    assert_eq!(train.status.code(), Some(7));
    assert!(stderr(&train).contains("texcal gen"), "{}", stderr(&train));

    let cal = texcal(dir.path(), &["calibrate", "--variant", "II"]);
    assert_eq!(cal.status.code(), Some(7));
    assert!(stderr(&cal).contains("texcal train --variant II"), "{}", stderr(&cal));

    let rep = texcal(dir.path(), &["report", "--variant", "III"]);
    assert!(stderr(&rep).contains("texcal train --variant III"), "{}", stderr(&rep));
}

#[test]
fn usage_and_config_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(texcal(dir.path(), &["train", "--variant", "IV"]).status.code(), Some(2));
    assert_eq!(texcal(dir.path(), &["frobnicate"]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[model]\nkernel_size = 4\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_texcal"))
        .args(["--config", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap(), "gen"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    fs::write(&bad, "[model]\nunknown_key = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_texcal"))
        .args(["--config", bad.to_str().unwrap(), "gen"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn pipeline_commands_write_named_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&texcal(dir.path(), &["gen"]));
    ok(&texcal(dir.path(), &["train", "--variant", "II"]));
    for f in ["model_II.ckpt", "holdout_II.csv", "train_report_II.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("train_report_II.json")).unwrap()).unwrap();
    assert_eq!(report["fold_accuracies"].as_array().unwrap().len(), 5);
    assert_eq!(read_logits(&out.join("holdout_II.csv")).unwrap().len(), 182 * 4);

    let cal = ok(&texcal(dir.path(), &["calibrate", "--variant", "II"]));
    assert!(cal.contains("holdout NLL"), "{cal}");
    let t = fs::read_to_string(out.join("temperature_II.txt")).unwrap();
    assert!(t.starts_with("T="), "{t}");
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("temperature_II.json")).unwrap()).unwrap();
    assert!(diag["nll_at_fit"].as_f64().unwrap() <= diag["nll_uncalibrated"].as_f64().unwrap());

    ok(&texcal(dir.path(), &["report", "--variant", "II"]));
    ok(&texcal(dir.path(), &["report", "--variant", "II", "--calibrated", "--bins", "7"]));
    let read = |name: &str| -> serde_json::Value { serde_json::from_str(&fs::read_to_string(out.join(name)).unwrap()).unwrap() };
    let (u, c) = (read("report_II_uncalibrated.json"), read("report_II_calibrated.json"));
    assert_eq!(u["accuracy"], c["accuracy"]);
    assert_eq!(u["n"], 188);
    assert_eq!(c["bins"].as_array().unwrap().len(), 7);
    assert_eq!(read_logits(&out.join("test_logits_II.csv")).unwrap().len(), 188);

    let svg = fs::read_to_string(out.join("reliability_II_calibrated.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="bar""#).count(), 7);
    assert_eq!(svg.matches("<line").count(), 1);
    let svg = fs::read_to_string(out.join("reliability_II_uncalibrated.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="bar""#).count(), 10);
    let csv = fs::read_to_string(out.join("reliability_II_uncalibrated.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "bin_index,lower,upper,count,accuracy,confidence");
    assert_eq!(csv.lines().count(), 11);

    ok(&texcal(dir.path(), &["sweep", "--variant", "II", "--calibrated"]));
    let first = fs::read(out.join("sweep_II_calibrated.csv")).unwrap();
    let rows = read_sweep(&out.join("sweep_II_calibrated.csv")).unwrap();
    let blur: Vec<f64> = rows.iter().filter(|r| r.perturbation == "blur").map(|r| r.sigma).collect();
    let noise: Vec<f64> = rows.iter().filter(|r| r.perturbation == "noise").map(|r| r.sigma).collect();
    assert_eq!(blur, vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0]);
    assert_eq!(noise, vec![1.0, 9.0, 17.0, 25.0, 33.0, 41.0, 50.0]);
    for p in ["blur", "noise"] {
        let svg = fs::read_to_string(out.join(format!("sweep_II_calibrated_{p}.svg"))).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
    ok(&texcal(dir.path(), &["sweep", "--variant", "II", "--calibrated", "--sequential"]));
    assert_eq!(fs::read(out.join("sweep_II_calibrated.csv")).unwrap(), first);

    let uncal_sweep = texcal(dir.path(), &["sweep", "--variant", "I"]);
    assert_eq!(uncal_sweep.status.code(), Some(7));
}

#[test]
fn all_writes_one_summary_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&texcal(dir.path(), &["all"]));
    assert!(stdout.contains("| Dataset |"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("dataset,ece_uncalibrated,ece_calibrated"));
    assert!(lines[1].starts_with("I,") && lines[2].starts_with("II,"));
    let md = fs::read_to_string(dir.path().join("out/summary.md")).unwrap();
    assert_eq!(md.lines().count(), 4);

    // a second run stops at the dataset stage and names it
    let again = texcal(dir.path(), &["all"]);
    assert_eq!(again.status.code(), Some(8));
    assert!(stderr(&again).contains("stage `gen`"), "{}", stderr(&again));
}
