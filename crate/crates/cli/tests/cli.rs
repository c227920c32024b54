//! End-to-end runs of the installed binary: argument handling, exit codes,
//! and the artifact layout of the cheap subcommands. The task subcommands
//! are exercised with throttled specs via --config to keep this fast.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rcbasin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcbasin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_lists_every_subcommand() {
    let out = rcbasin(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    for sub in ["gen-data", "task1", "task2", "task3", "classify", "sweep", "plot"] {
        assert!(text.contains(sub), "--help misses {sub}:\n{text}");
    }
    for flag in ["--config", "--seed", "--out", "--threads", "--long-transient"] {
        assert!(text.contains(flag), "--help misses {flag}:\n{text}");
    }
}

#[test]
fn unknown_flag_is_a_configuration_error() {
    let out = rcbasin(&["task1", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_configuration_error() {
    let out = rcbasin(&["task2", "--config", "/nonexistent/rcbasin.toml"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("/nonexistent/rcbasin.toml"));
}

#[test]
fn missing_classify_input_is_a_configuration_error() {
    let out = rcbasin(&["classify", "--input", "/nonexistent/run.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn unknown_system_name_is_rejected() {
    let out = rcbasin(&["gen-data", "--system", "roessler"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("roessler"));
}

#[test]
fn zero_threads_is_rejected() {
    let out = rcbasin(&["task1", "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_classify_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("lorenz.csv");
    let out = rcbasin(&[
        "gen-data",
        "--system",
        "lorenz",
        "--duration",
        "60",
        "--output",
        data.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let header = fs::read_to_string(&data).unwrap();
    assert!(header.starts_with("t,x1,x2,x3"), "{header}");

    let out = rcbasin(&[
        "classify",
        "--input",
        data.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        text.contains("label: good_recon"),
        "ground-truth Lorenz should classify as a good reconstruction:\n{text}"
    );
    let csv = fs::read_to_string(dir.path().join("classification.csv")).unwrap();
    assert!(csv.starts_with("run_id,ic_index,label,c1,c2,c3,"), "{csv}");
}

#[test]
fn too_short_classify_input_aborts_numerically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("short.csv");
    let out = rcbasin(&[
        "gen-data",
        "--system",
        "lorenz",
        "--duration",
        "5",
        "--output",
        data.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = rcbasin(&[
        "classify",
        "--input",
        data.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn sprott_parameter_shorthand_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sprott.csv");
    let out = rcbasin(&[
        "gen-data",
        "--system",
        "sprott:20.5",
        "--duration",
        "10",
        "--output",
        data.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(data.exists());
}

fn write_throttle_config(path: &Path, body: &str) {
    fs::write(path, body).unwrap();
}

#[test]
fn task2_runs_from_a_throttled_config_and_replots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("throttle.toml");
    write_throttle_config(
        &cfg,
        "n_ic = 3\nsweep_scope = \"inter_train\"\nsweep_step = 0.05\nemit_plots = false\n",
    );
    let out_dir = dir.path().join("run");
    let out = rcbasin(&[
        "task2",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("trained attractors:"), "{text}");
    assert!(text.contains("branches:"), "{text}");
    for artifact in ["manifest.toml", "trained.csv", "branches.csv", "network.txt", "readout.txt"]
    {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    assert!(
        !out_dir.join("branches.svg").exists(),
        "emit_plots = false must suppress the svg"
    );

    let svg = dir.path().join("branches.svg");
    let out = rcbasin(&[
        "plot",
        "--input",
        out_dir.join("branches.csv").to_str().unwrap(),
        "--output",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let body = fs::read_to_string(&svg).unwrap();
    assert!(body.contains("<svg"), "{body}");
}

#[test]
fn manifest_config_must_match_the_subcommand_family() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("throttle.toml");
    write_throttle_config(
        &cfg,
        "n_ic = 3\nsweep_scope = \"inter_train\"\nsweep_step = 0.05\nemit_plots = false\n",
    );
    let out_dir = dir.path().join("run");
    let out = rcbasin(&[
        "task2",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let manifest = out_dir.join("manifest.toml");
    let out = rcbasin(&[
        "task3",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().join("other").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("task2"), "{}", stderr(&out));
}

#[test]
fn bias_sweep_without_readout_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("throttle.toml");
    write_throttle_config(
        &cfg,
        "n_ic = 3\nsweep_scope = \"inter_train\"\nsweep_step = 0.05\nemit_plots = false\n",
    );
    let out_dir = dir.path().join("run");
    let out = rcbasin(&[
        "task2",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let out = rcbasin(&[
        "sweep",
        "--network",
        out_dir.join("network.txt").to_str().unwrap(),
        "--start",
        "0.2",
        "--stop",
        "0.1",
        "--out",
        dir.path().join("sweep").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("--readout"), "{}", stderr(&out));

    let out = rcbasin(&[
        "sweep",
        "--network",
        out_dir.join("network.txt").to_str().unwrap(),
        "--readout",
        out_dir.join("readout.txt").to_str().unwrap(),
        "--start",
        "0.21",
        "--stop",
        "0.15",
        "--step",
        "0.02",
        "--coordinate",
        "1",
        "--kind",
        "min",
        "--out",
        dir.path().join("sweep").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.path().join("sweep/sweep.csv").exists());
    assert!(dir.path().join("sweep/sweep.svg").exists());
}
