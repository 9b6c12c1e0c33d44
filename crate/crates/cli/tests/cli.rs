//! End-to-end tests of the `shapecomplete` binary: subcommand plumbing,
//! config layering, seed precedence, error categories, and byte-level
//! determinism of the artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shapecomplete"));
    // Tests control the seed explicitly; an ambient seed must not leak in.
    cmd.env_remove("SHAPECOMPLETE_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "expected success for {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Asserts the run fails with the given exit code and a single
/// `error[CATEGORY]: message` line on stderr.
fn run_err(args: &[&str], code: i32, category: &str) -> String {
    let out = run(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "exit code for {args:?}\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8(out.stderr).expect("utf-8 stderr");
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "want one error line, got: {stderr:?}");
    let prefix = format!("error[{category}]: ");
    assert!(
        lines[0].starts_with(&prefix),
        "want '{prefix}...', got: {}",
        lines[0]
    );
    lines[0].to_string()
}

/// Generates a small dataset for plumbing tests: `shapes` low-resolution
/// meshes with two generative modes.
fn small_dataset(dir: &Path, shapes: usize, seed: u64) -> PathBuf {
    let ds = dir.join("ds");
    run_ok(&[
        "synth",
        "--out",
        ds.to_str().unwrap(),
        "--shapes",
        &shapes.to_string(),
        "--modes",
        "2",
        "--resolution",
        "1",
        "--noise",
        "0.05",
        "--seed",
        &seed.to_string(),
    ]);
    ds
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest_seed(ds: &Path) -> u64 {
    read_json(&ds.join("dataset.json"))["provenance"]["seed"]
        .as_u64()
        .unwrap()
}

#[test]
fn synth_is_deterministic_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        run_ok(&["synth", "--seed", "7", "--shapes", "42", "--out", dir.to_str().unwrap()]);
    }
    // Identical dataset hashes, manifests, ground truth, and mesh bytes.
    let ma = std::fs::read(a.join("dataset.json")).unwrap();
    let mb = std::fs::read(b.join("dataset.json")).unwrap();
    assert_eq!(ma, mb);
    let ga = std::fs::read(a.join("ground_truth.json")).unwrap();
    let gb = std::fs::read(b.join("ground_truth.json")).unwrap();
    assert_eq!(ga, gb);
    for name in ["shape_000.ply", "shape_021.ply", "shape_041.ply"] {
        let fa = std::fs::read(a.join(name)).unwrap();
        let fb = std::fs::read(b.join(name)).unwrap();
        assert_eq!(fa, fb, "{name}");
    }
    let manifest = read_json(&a.join("dataset.json"));
    assert_eq!(manifest["files"].as_array().unwrap().len(), 42);
    assert!(manifest["provenance"]["dataset_digest"].as_str().unwrap().len() == 64);
}

#[test]
fn seed_precedence_is_flag_then_config_then_env_then_default() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("synth.json");
    std::fs::write(&config, r#"{"seed": 3, "shapes": 5, "modes": 2, "resolution": 0}"#).unwrap();

    // Flag beats config file.
    let ds = tmp.path().join("flag");
    run_ok(&[
        "synth", "--config", config.to_str().unwrap(),
        "--seed", "9", "--out", ds.to_str().unwrap(),
    ]);
    assert_eq!(manifest_seed(&ds), 9);
    // Shape count still comes from the file.
    assert_eq!(read_json(&ds.join("dataset.json"))["files"].as_array().unwrap().len(), 5);

    // Config beats environment.
    let ds = tmp.path().join("conf");
    let out = binary()
        .args(["synth", "--config", config.to_str().unwrap(), "--out", ds.to_str().unwrap()])
        .env("SHAPECOMPLETE_SEED", "21")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(manifest_seed(&ds), 3);

    // Environment beats the built-in default.
    let ds = tmp.path().join("env");
    let out = binary()
        .args(["synth", "--shapes", "5", "--modes", "2", "--resolution", "0",
               "--out", ds.to_str().unwrap()])
        .env("SHAPECOMPLETE_SEED", "21")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(manifest_seed(&ds), 21);

    // A malformed environment seed is a CONFIG error when it would be used.
    let out = binary()
        .args(["synth", "--shapes", "5", "--modes", "2", "--resolution", "0",
               "--out", tmp.path().join("bad").to_str().unwrap()])
        .env("SHAPECOMPLETE_SEED", "banana")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(14));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[CONFIG]:"));
}

#[test]
fn config_files_reject_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("synth.json");
    std::fs::write(&config, r#"{"shapes": 5, "bogus_knob": 1}"#).unwrap();
    let line = run_err(
        &["synth", "--config", config.to_str().unwrap(), "--out", "unused"],
        14,
        "CONFIG",
    );
    assert!(line.contains("bogus_knob"), "{line}");
}

#[test]
fn unknown_flags_are_errors() {
    let out = run(&["synth", "--out", "unused", "--bogus-flag"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus-flag"));
}

#[test]
fn help_documents_every_flag() {
    for (sub, flags) in [
        ("synth", vec!["--out", "--seed", "--shapes", "--modes", "--resolution",
                       "--noise", "--sigmas", "--format", "--config"]),
        ("build-ssm", vec!["--dataset", "--out", "--config"]),
        ("complete", vec!["--model", "--input", "--out", "--known-label", "--crest",
                          "--no-acetabulum", "--method", "--max-knots",
                          "--tps-regularization", "--tikhonov"]),
        ("eval-loo", vec!["--dataset", "--mode", "--crest", "--methods", "--no-acetabulum",
                          "--tikhonov", "--max-knots", "--tps-regularization",
                          "--skip-failures", "--jobs", "--out", "--csv", "--heatmaps",
                          "--config"]),
        ("heatmap", vec!["--report", "--dataset", "--crest", "--no-acetabulum",
                         "--method", "--out"]),
    ] {
        let out = run_ok(&[sub, "--help"]);
        let help = String::from_utf8(out.stdout).unwrap();
        for flag in flags {
            assert!(help.contains(flag), "{sub} --help is missing {flag}");
        }
    }
}

#[test]
fn failures_exit_with_category_specific_codes() {
    let tmp = tempfile::tempdir().unwrap();

    // IO: missing dataset directory.
    run_err(
        &["build-ssm", "--dataset", tmp.path().join("nope").to_str().unwrap(),
          "--out", "unused"],
        10,
        "IO",
    );

    // FORMAT: a dataset whose mesh file is not PLY at all.
    let bad = tmp.path().join("bad");
    std::fs::create_dir_all(&bad).unwrap();
    std::fs::write(bad.join("shape_000.ply"), "this is not a mesh").unwrap();
    run_err(
        &["build-ssm", "--dataset", bad.to_str().unwrap(), "--out", "unused"],
        11,
        "FORMAT",
    );

    // CONFIG: percent-style crest fractions are rejected with a hint.
    let ds = small_dataset(tmp.path(), 5, 8);
    let line = run_err(
        &["eval-loo", "--dataset", ds.to_str().unwrap(), "--crest", "5,10"],
        14,
        "CONFIG",
    );
    assert!(line.contains("0.05"), "hint missing from: {line}");

    // CONFIG: extrapolation knobs are rejected in complete-anatomy mode.
    run_err(
        &["eval-loo", "--dataset", ds.to_str().unwrap(), "--mode", "full",
          "--methods", "smooth"],
        14,
        "CONFIG",
    );
}

#[test]
fn complete_rejects_an_input_not_corresponded_with_the_model() {
    let tmp = tempfile::tempdir().unwrap();
    let coarse = tmp.path().join("coarse");
    run_ok(&["synth", "--out", coarse.to_str().unwrap(), "--shapes", "5",
             "--modes", "2", "--resolution", "0", "--seed", "8"]);
    let model = tmp.path().join("model.ssm");
    run_ok(&["build-ssm", "--dataset", coarse.to_str().unwrap(),
             "--out", model.to_str().unwrap()]);

    // Input mesh at a different resolution: not corresponded.
    let fine = small_dataset(tmp.path(), 5, 8);
    run_err(
        &["complete", "--model", model.to_str().unwrap(),
          "--input", fine.join("shape_000.ply").to_str().unwrap(),
          "--out", tmp.path().join("x.ply").to_str().unwrap(),
          "--crest", "0.15"],
        12,
        "TOPOLOGY",
    );
}

#[test]
fn complete_writes_the_mesh_and_an_audit_record() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), 6, 13);
    let model = tmp.path().join("model.ssm");
    run_ok(&["build-ssm", "--dataset", ds.to_str().unwrap(), "--out", model.to_str().unwrap()]);

    let out_ply = tmp.path().join("done.ply");
    run_ok(&["complete", "--model", model.to_str().unwrap(),
             "--input", ds.join("shape_000.ply").to_str().unwrap(),
             "--out", out_ply.to_str().unwrap(),
             "--crest", "0.15"]);

    let record = read_json(&tmp.path().join("done.ply.json"));
    assert_eq!(record["completion"]["method"], "smooth");
    let known = record["known_indices"].as_array().unwrap().len();
    let unknown = record["completion"]["unknown_count"].as_u64().unwrap() as usize;
    assert_eq!(known + unknown, 42);
    assert!(record["seam_gap_mm"].as_f64().unwrap() <= 1e-6);
    assert!(!record["seam_indices"].as_array().unwrap().is_empty());
    assert_eq!(record["provenance"]["tool_version"], env!("CARGO_PKG_VERSION"));

    // The completed mesh is a loadable PLY with the input's topology.
    let loaded = shapecomplete_core::ply::load_mesh(&out_ply).unwrap();
    assert_eq!(loaded.mesh.vertex_count(), 42);

    // The known label of the input can drive the same completion.
    run_ok(&["complete", "--model", model.to_str().unwrap(),
             "--input", ds.join("shape_001.ply").to_str().unwrap(),
             "--out", tmp.path().join("done2.ply").to_str().unwrap(),
             "--known-label", "crest", "--method", "cnp"]);
    let record = read_json(&tmp.path().join("done2.ply.json"));
    assert_eq!(record["completion"]["method"], "cut_and_paste");
}

#[test]
fn eval_loo_writes_report_csv_and_heatmaps_with_the_requested_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), 6, 13);
    let report_path = tmp.path().join("report.json");
    let csv_path = tmp.path().join("report.csv");
    let heat_dir = tmp.path().join("heat");
    run_ok(&["eval-loo", "--dataset", ds.to_str().unwrap(),
             "--crest", "0,0.05", "--methods", "cnp,smooth",
             "--out", report_path.to_str().unwrap(),
             "--csv", csv_path.to_str().unwrap(),
             "--heatmaps", heat_dir.to_str().unwrap()]);

    let report = read_json(&report_path);
    assert_eq!(report["kind"], "partial_prior_loo");
    assert_eq!(report["per_iteration"].as_array().unwrap().len(), 6 * 2 * 2);
    assert_eq!(report["provenance"]["seed"].as_u64(), Some(13));

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "crest_percent,include_acetabulum,cut_and_paste_rms_mm,cut_and_paste_max_mm,\
         smooth_rms_mm,smooth_max_mm"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,true,"));
    assert!(lines[2].starts_with("5,true,"));

    // One heat map per cell, and the standalone subcommand reproduces it
    // byte for byte.
    let cell = heat_dir.join("heat_crest0p05_acetabulum_smooth.ply");
    assert!(cell.exists());
    let single = tmp.path().join("single.ply");
    run_ok(&["heatmap", "--report", report_path.to_str().unwrap(),
             "--dataset", ds.to_str().unwrap(),
             "--crest", "0.05", "--method", "smooth",
             "--out", single.to_str().unwrap()]);
    assert_eq!(std::fs::read(cell).unwrap(), std::fs::read(single).unwrap());
}

#[test]
fn eval_loo_full_mode_reports_one_aggregate_row() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), 5, 29);
    let report_path = tmp.path().join("full.json");
    let csv_path = tmp.path().join("full.csv");
    run_ok(&["eval-loo", "--dataset", ds.to_str().unwrap(), "--mode", "full",
             "--out", report_path.to_str().unwrap(),
             "--csv", csv_path.to_str().unwrap()]);
    let report = read_json(&report_path);
    assert_eq!(report["kind"], "complete_anatomy_loo");
    assert_eq!(report["per_iteration"].as_array().unwrap().len(), 5);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "rms_of_mean_surface_mm,avg_of_max_surface_mm");
    assert_eq!(lines.len(), 2);
}

#[test]
fn report_bytes_are_independent_of_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), 6, 31);
    let mut bytes = Vec::new();
    for jobs in ["1", "3"] {
        let path = tmp.path().join(format!("report_{jobs}.json"));
        run_ok(&["eval-loo", "--dataset", ds.to_str().unwrap(),
                 "--crest", "0.05", "--methods", "cnp,smooth",
                 "--jobs", jobs, "--out", path.to_str().unwrap()]);
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}
