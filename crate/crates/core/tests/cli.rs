use std::path::{Path, PathBuf};

use upasim::cli::{self, EXIT_MONITOR, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
use upasim::io::load_history;
use upasim::model::Species;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn reference_text() -> String {
    std::fs::read_to_string(config("reference_1d.toml")).unwrap()
}

/// Small, quick variant of the reference config.
fn small(text: &str) -> String {
    text.replace("cells = [128]", "cells = [32]").replace("t_end = 1.0", "t_end = 0.05")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("upasim").chain(args.iter().copied()))
}

#[test]
fn validate_reference_succeeds() {
    assert_eq!(run(&["validate", config("reference_1d.toml").to_str().unwrap()]), EXIT_OK);
    assert_eq!(run(&["validate", config("demo_2d.toml").to_str().unwrap()]), EXIT_OK);
}

#[test]
fn missing_config_is_a_validation_failure() {
    assert_eq!(run(&["validate", "/nonexistent/run.toml"]), EXIT_VALIDATION);
}

#[test]
fn unknown_subcommand_is_usage() {
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["mms", "nope", "8,16,32"]), EXIT_USAGE);
    assert_eq!(run(&["mms", "diffusion", "8,x"]), EXIT_USAGE);
}

#[test]
fn hypothesis_violations_exit_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let text = reference_text();
    let cases = [
        text.replace("chi_11 = 1e-3", "chi_11 = 1.0"),
        text.replace("alpha_11 = 0.1", "alpha_11 = 5.0"),
        text.replace("N = { value = 2e-3 }", "N = { value = -2e-3 }"),
        text.replace(r#"P = { kind = "constant", value = 0.0 }"#, r#"P = { kind = "constant", value = -0.5 }"#),
        text.replace("chi_11 = 1e-3", "chii_11 = 1e-3"),
    ];
    for (k, t) in cases.iter().enumerate() {
        assert_ne!(t, &text, "case {k} did not change the config");
        let p = write_config(tmp.path(), t);
        assert_eq!(run(&["validate", p.to_str().unwrap()]), EXIT_VALIDATION, "case {k}");
    }
}

#[test]
fn run_then_postprocess() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small(&reference_text()));
    let out = tmp.path().join("out");
    assert_eq!(run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_OK);
    for f in ["metadata.json", "series.csv", "report.json", "steps.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["steps_completed"], 50);

    let history = load_history(&out).unwrap();
    assert_eq!(history.len(), 51);
    assert_eq!(history.species().collect::<Vec<_>>(), Species::ALL.to_vec());

    assert_eq!(run(&["norms", out.to_str().unwrap()]), EXIT_OK);
    let norms = std::fs::read_to_string(out.join("norms.csv")).unwrap();
    assert_eq!(norms.lines().count(), 52);
    assert_eq!(run(&["weak-residual", out.to_str().unwrap(), cfg.to_str().unwrap()]), EXIT_OK);

    // a second run may not clobber the first
    assert_ne!(run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_OK);
}

#[test]
fn monitor_halt_exits_with_monitor_code() {
    let tmp = tempfile::tempdir().unwrap();
    // a step far beyond the taxis stability limit moves u_V off its boundary plateau
    let text = small(&reference_text())
        .replace("dt = 1e-3", "dt = 0.2")
        .replace("t_end = 0.05", "t_end = 1.0")
        .replace("[output]", "[monitors.modes]\nuv_boundary = \"hard\"\n\n[output]");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let code = run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_MONITOR);
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["status"], "monitor_halt");
    assert!(out.join("failure").is_dir());
}

#[test]
fn mms_prints_a_table() {
    assert_eq!(run(&["mms", "diffusion", "8,16,32", "--t-end", "0.05"]), EXIT_OK);
}
