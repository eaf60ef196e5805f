//! End-to-end checks of the CLI binary: exit codes, error messages, manifests.

use std::path::Path;
use std::process::{Command, Output};

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cohertherm"))
        .args(args)
        .output()
        .expect("failed to spawn cohertherm")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_config_file_exits_one() {
    let out = run_cli(&["/nonexistent/path.cfg"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_key_exits_one_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.cfg",
        "scenario = trajectories\n[params]\nbogus_knob = 1\n",
    );
    let out = run_cli(&[&cfg]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus_knob"), "stderr: {stderr}");
}

#[test]
fn unknown_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "scenario = frobnicate\n");
    let out = run_cli(&[&cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frobnicate"));
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad_preset.cfg",
        "scenario = lindblad\n[params]\npreset = 9\n",
    );
    let out_dir = dir.path().join("out");
    let out = run_cli(&[&cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("runtime error"));
}

#[test]
fn successful_run_writes_manifest_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ok.cfg",
        "scenario = fluctuation_curve\nseed = 7\n[params]\nn_points = 21\n",
    );
    let out_dir = dir.path().join("out");
    let out = run_cli(&[&cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("scenario = fluctuation_curve"));
    assert!(manifest.contains("config_sha256 = "));
    assert!(manifest.contains("artifact = ratio_curve.csv"));
    let curve = std::fs::read_to_string(out_dir.join("ratio_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 22); // header + n_points rows
    assert!(!curve.contains('\r'));
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ok.cfg",
        "scenario = phase_opt\nseed = 1\n[params]\ncomponents = 3\n",
    );
    let run = |out: &Path, seed: Option<&str>| {
        let mut args = vec![cfg.as_str(), "--output-dir", out.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert_eq!(run_cli(&args).status.code(), Some(0));
        std::fs::read(out.join("phase_opt.csv")).unwrap()
    };
    let a = run(&dir.path().join("a"), Some("99"));
    let b = run(&dir.path().join("b"), Some("99"));
    let c = run(&dir.path().join("c"), None);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn all_scenarios_run_clean() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        ("trajectories", "scenario = trajectories\n[system]\nkind = double_well\nhbar = 0.05\n[params]\nt = 1.6\n"),
        ("propagator", "scenario = propagator\n[system]\nkind = harmonic\n[params]\nt = 0.9\n"),
        ("chaos_tunneling", "scenario = chaos_tunneling\n[system]\nkind = kicked_rotor\nkick_strength = 7\nhbar = 0.05\n[params]\nn_kicks = 4\nn_seeds = 400\n"),
        ("fluctuation_curve", "scenario = fluctuation_curve\n"),
        ("phase_opt", "scenario = phase_opt\nseed = 3\n"),
        ("lindblad", "scenario = lindblad\n[params]\npreset = 2\nt = 2\ndt = 0.02\n"),
    ];
    for (name, text) in configs {
        let cfg = write_config(dir.path(), &format!("{name}.cfg"), text);
        let out_dir = dir.path().join(name);
        let out = run_cli(&[&cfg, "--output-dir", out_dir.to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(out_dir.join("manifest.txt").exists(), "{name} wrote no manifest");
    }
}
