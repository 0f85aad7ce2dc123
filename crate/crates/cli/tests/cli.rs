use std::path::Path;
use std::process::{Command, Output};

use grd::grid::rmse;
use grd::io::{read_dataset, read_grid, samples_to_csv};
use grd::SampleSetF64;

fn grd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grd")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = grd(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn error_code(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has an error line");
    let v: serde_json::Value = serde_json::from_str(line).expect("last stderr line is JSON");
    v["error"]["code"].as_str().unwrap().to_string()
}

#[test]
fn synth_train_reconstruct_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--seed", "1", "--count", "4", "--axes", "desk", "--out", "ds"]);
    let table = ok(d, &["train", "--dataset", "ds", "--out", "basis.json"]);
    assert!(table.contains("cumulative"));

    let ds = read_dataset(&d.join("ds")).unwrap();
    assert_eq!(ds.train.len(), 4);
    let member = &ds.train[2];
    let all: Vec<usize> = (0..member.axes().len()).collect();
    std::fs::write(d.join("s.csv"), samples_to_csv(&SampleSetF64::from_grid(member, &all).unwrap())).unwrap();

    ok(d, &["reconstruct", "--basis", "basis.json", "--samples", "s.csv", "--n", "match", "--out", "rec.json"]);
    let rec = read_grid(&d.join("rec.json")).unwrap();
    assert!(rmse(&rec, member).unwrap() < 1e-6);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("rec.diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["membership_passed"], true);
    assert_eq!(diag["n_components"], 3);
}

#[test]
fn eval_on_training_set_at_full_rank_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--seed", "3", "--count", "5", "--axes", "desk", "--out", "ds"]);
    // 4 of the 5 grids are tagged train; they span 3 centered directions.
    ok(d, &["eval", "--dataset", "ds", "--test-on-train", "--n", "3", "--s", "54", "--out", "t.json"]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("t.json")).unwrap()).unwrap();
    let row = &v["summary"][0];
    assert_eq!(row["samples"], 54);
    assert!(row["mean_over_splits"]["mean_rmse"].as_f64().unwrap() < 1e-6);
    assert!(row["mean_over_splits"]["worst_linf"].as_f64().unwrap() < 1e-6);
}

#[test]
fn unknown_flag_fails_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = grd(d, &["synth", "--seed", "1", "--count", "2", "--out", "ds", "--frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(error_code(&out), "USAGE");
    assert_eq!(std::fs::read_dir(d).unwrap().count(), 0);
}

#[test]
fn errors_are_json_with_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = grd(d, &["reconstruct", "--basis", "missing.json", "--samples", "s.csv", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_code(&out), "IO_ERROR");

    std::fs::write(d.join("bad.json"), "{\"kind\": \"eigen\"}").unwrap();
    std::fs::write(d.join("s.csv"), "bitrate_kbps,resolution_diag,quality\n").unwrap();
    let out = grd(d, &["reconstruct", "--basis", "bad.json", "--samples", "s.csv", "--out", "r.json"]);
    assert_eq!(error_code(&out), "SCHEMA_ERROR");
    assert!(!d.join("r.json").exists());

    ok(d, &["synth", "--seed", "1", "--count", "2", "--axes", "desk", "--out", "ds"]);
    let out = grd(d, &["train", "--dataset", "ds", "--kind", "trigonometric", "--n", "11", "--out", "b.json"]);
    assert_eq!(error_code(&out), "NUMERICAL_ERROR");
    assert!(!d.join("b.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for out in ["a", "b"] {
        ok(d, &["synth", "--seed", "9", "--count", "6", "--axes", "desk", "--out", out]);
        ok(d, &["train", "--dataset", out, "--out", &format!("{out}.basis.json")]);
        ok(d, &["sample-order", "--dataset", out, "--count", "12", "--out", &format!("{out}.order.json")]);
    }
    for f in ["manifest.json", "grid_0000.json", "grid_0005.json"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap());
    }
    for f in ["basis.json", "order.json"] {
        assert_eq!(std::fs::read(d.join(format!("a.{f}"))).unwrap(), std::fs::read(d.join(format!("b.{f}"))).unwrap());
    }
}

#[test]
fn sample_order_lists_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--seed", "4", "--count", "8", "--axes", "desk", "--out", "ds"]);
    ok(d, &["sample-order", "--dataset", "ds", "--uniform-log-resolution", "5", "--count", "4", "--out", "u.json"]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("u.json")).unwrap()).unwrap();
    let rates: Vec<f64> = v["cells"].as_array().unwrap().iter().map(|c| c["bitrate_kbps"].as_f64().unwrap()).collect();
    assert_eq!(rates, vec![1000.0, 2000.0, 4000.0, 9000.0]);
    assert!(v["cells"].as_array().unwrap().iter().all(|c| c["resolution_diag"] == 2203.0));
}

fn write_pairs(path: &Path) {
    let mut text = String::from("content_id,codec,bitrate_kbps,quality\n");
    for (c, (lam, q)) in [(0.5f64, 90.0f64), (0.8, 85.0)].into_iter().enumerate() {
        for r in [1000.0f64, 2000.0, 3500.0, 5500.0, 8000.0] {
            let za = q * (1.0 - (-lam * r / 1000.0).exp()).powf(1.5);
            let zb = q * (1.0 - (-lam * 1.3 * r / 1000.0).exp()).powf(1.5);
            text.push_str(&format!("s{c},avc,{r},{za}\ns{c},hevc,{r},{zb}\n"));
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn compare_writes_report_and_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_pairs(&d.join("pairs.csv"));
    ok(d, &["compare", "--samples", "pairs.csv", "--fitter", "pchip", "--out", "r.json", "--curves-dir", "curves"]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(v["codec_a"], "avc");
    assert_eq!(v["scored"], 2);
    assert!(v["mean_delta_q"].as_f64().unwrap() > 0.0);
    assert!(v["mean_delta_r"].as_f64().unwrap() < 0.0);
    let curve = std::fs::read_to_string(d.join("curves").join("s0.csv")).unwrap();
    assert!(curve.starts_with("codec,bitrate_kbps,log10_kbps,quality\n"));
    assert_eq!(curve.lines().filter(|l| l.starts_with("hevc,")).count(), 101);

    // egrd needs a curve basis
    let out = grd(d, &["compare", "--samples", "pairs.csv", "--fitter", "egrd", "--out", "e.json"]);
    assert_eq!(error_code(&out), "INVALID_INPUT");
    ok(d, &["synth", "--seed", "2", "--count", "20", "--axes", "desk", "--out", "ds"]);
    ok(d, &["train", "--dataset", "ds", "--per-resolution", "--out", "curve.json"]);
    ok(d, &["compare", "--samples", "pairs.csv", "--fitter", "egrd", "--basis", "curve.json", "--format", "csv", "--out", "e.csv"]);
    let csv = std::fs::read_to_string(d.join("e.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn every_subcommand_has_help() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in ["synth", "train", "sample-order", "reconstruct", "eval", "compare"] {
        let out = ok(tmp.path(), &[sub, "--help"]);
        assert!(out.contains("--out"), "{sub}");
    }
}
