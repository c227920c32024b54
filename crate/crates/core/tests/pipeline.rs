//! End-to-end runs of the batch tasks at desk scale: every entry point is
//! exercised against a temporary output directory, reruns must reproduce the
//! CSV outputs byte for byte, and a run restarted from nothing but its
//! manifest must land on the same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use rcbasin_core::harness::{replot, Task1Report};
use rcbasin_core::{
    run_task1, run_task2, run_task3, Network, Readout, RunManifest, SweepScope, TaskKind, TaskSpec,
};

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn assert_same_bytes(a: &Path, b: &Path) {
    let left = read(a);
    let right = read(b);
    assert_eq!(
        left,
        right,
        "{} and {} differ",
        a.display(),
        b.display()
    );
}

fn mini_task2(out: PathBuf) -> TaskSpec {
    let mut spec = TaskSpec::defaults(TaskKind::Task2);
    spec.out_dir = out;
    spec.n_ic = 3;
    spec.sweep_scope = SweepScope::InterTrain;
    spec.sweep_step = 0.04;
    spec
}

#[test]
fn task2_run_writes_artifacts_and_reruns_byte_identically() {
    let root = tempfile::tempdir().unwrap();
    let first = mini_task2(root.path().join("a"));
    let out = run_task2(&first).unwrap();

    assert_eq!(out.trained.len(), 2);
    assert_eq!(out.trained[0].bias, 0.2);
    assert_eq!(out.trained[1].bias, -0.2);
    for report in &out.trained {
        assert!(
            report.final_state.iter().all(|v| v.is_finite() && v.abs() <= 1.0),
            "closed-loop state at bias {} left the invariant box",
            report.bias
        );
        assert!(report.expected.is_some(), "ground-truth period count failed");
    }
    assert!(!out.branches.is_empty(), "sweep produced no branches");
    assert!(out.branch_csv.exists());

    let dir = &first.out_dir;
    for name in ["manifest.toml", "trained.csv", "network.txt", "readout.txt"] {
        assert!(dir.join(name).exists(), "missing {name}");
    }
    assert!(dir.join("basin_b+0.200.csv").exists());
    assert!(dir.join("basin_b-0.200.csv").exists());
    assert!(dir.join("branches.svg").exists());

    let second = mini_task2(root.path().join("b"));
    run_task2(&second).unwrap();
    for name in ["trained.csv", "branches.csv", "basin_b+0.200.csv", "basin_b-0.200.csv"] {
        assert_same_bytes(&first.out_dir.join(name), &second.out_dir.join(name));
    }
}

#[test]
fn task2_manifest_alone_reproduces_the_run() {
    let root = tempfile::tempdir().unwrap();
    let spec = mini_task2(root.path().join("orig"));
    run_task2(&spec).unwrap();

    let manifest = RunManifest::load(&spec.out_dir.join("manifest.toml")).unwrap();
    assert_eq!(manifest.spec, spec);
    assert!(!manifest.decisions.is_empty());

    let mut replay = manifest.spec;
    replay.out_dir = root.path().join("replay");
    run_task2(&replay).unwrap();
    for name in ["trained.csv", "branches.csv"] {
        assert_same_bytes(&spec.out_dir.join(name), &replay.out_dir.join(name));
    }
}

#[test]
fn task2_saved_network_and_readout_reload_exactly() {
    let root = tempfile::tempdir().unwrap();
    let spec = mini_task2(root.path().join("run"));
    run_task2(&spec).unwrap();

    let net = Network::load(&spec.out_dir.join("network.txt")).unwrap();
    let rebuilt = Network::build(&spec.config).unwrap();
    assert_eq!(net.m, rebuilt.m, "stored recurrent matrix drifted");
    assert_eq!(net.w_in, rebuilt.w_in);
    assert_eq!(net.rho_actual, rebuilt.rho_actual);

    let readout = Readout::load(&spec.out_dir.join("readout.txt")).unwrap();
    assert_eq!(readout.dim(), 3);
    assert_eq!(readout.n_nodes(), spec.config.n);
    assert_eq!(readout.segments.len(), 2);

    let resaved = spec.out_dir.join("readout_resaved.txt");
    readout.save(&resaved).unwrap();
    assert_same_bytes(&spec.out_dir.join("readout.txt"), &resaved);
}

#[test]
fn task1_grid_accounts_for_every_matrix_and_replots() {
    let root = tempfile::tempdir().unwrap();
    let mut spec = TaskSpec::defaults(TaskKind::Task1);
    spec.out_dir = root.path().join("t1");
    spec.n_matrices = 2;
    spec.n_ic = 6;
    spec.rho_grid = vec![0.0, 0.5];

    let Task1Report { ensemble, fine_branches } = run_task1(&spec).unwrap();
    assert!(fine_branches.is_empty());
    assert_eq!(ensemble.table.rhos, vec![0.0, 0.5]);
    for (row, rho) in ensemble.table.counts.iter().zip(&ensemble.table.rhos) {
        let total: usize = row.iter().sum();
        let failed = ensemble
            .failures
            .iter()
            .filter(|f| f.rho == *rho)
            .count();
        assert_eq!(total + failed, 2, "matrices unaccounted for at rho {rho}");
    }
    // With the recurrent matrix rescaled to radius zero the closed loop
    // cannot echo the source, so every cell classifies as untrained.
    assert_eq!(ensemble.table.counts[0][2], 2, "rho 0 should yield scenario 3");

    let dir = &spec.out_dir;
    assert!(dir.join("ensemble.svg").exists());
    let map = read(&dir.join("matrix_map.csv"));
    assert_eq!(map.lines().count(), 1 + 4, "one row per (matrix, rho) cell plus header");
    let cells: Vec<_> = fs::read_dir(dir.join("cells")).unwrap().collect();
    assert_eq!(cells.len(), 4, "one classification file per (matrix, rho) cell");

    replot(&dir.join("ensemble.csv"), &dir.join("ensemble_replot.svg")).unwrap();
    assert!(dir.join("ensemble_replot.svg").exists());

    let mut rerun = spec.clone();
    rerun.out_dir = root.path().join("t1b");
    run_task1(&rerun).unwrap();
    assert_same_bytes(&spec.out_dir.join("ensemble.csv"), &rerun.out_dir.join("ensemble.csv"));
    assert_same_bytes(
        &spec.out_dir.join("matrix_map.csv"),
        &rerun.out_dir.join("matrix_map.csv"),
    );
}

#[test]
fn task3_reports_a_gap_outcome_and_the_overlap_shift() {
    let root = tempfile::tempdir().unwrap();
    let mut spec = TaskSpec::defaults(TaskKind::Task3);
    spec.out_dir = root.path().join("t3");
    spec.n_ic = 3;
    spec.sweep_scope = SweepScope::InterTrain;
    spec.sweep_step = 0.05;
    spec.emit_plots = false;

    let out = run_task3(&spec).unwrap();
    assert_eq!(out.trained.len(), 2);
    assert!(out.outcome.is_some(), "task 3 must classify the inter-train gap");

    let manifest = RunManifest::load(&spec.out_dir.join("manifest.toml")).unwrap();
    let shift = manifest
        .halvorsen_shift
        .expect("task 3 manifest records the overlap shift");
    assert!(shift.iter().all(|v| v.is_finite()));

    let outcome_csv = read(&spec.out_dir.join("outcome.csv"));
    let mut lines = outcome_csv.lines();
    assert_eq!(lines.next(), Some("outcome,lo,hi"));
    let row = lines.next().expect("outcome row");
    let tag = row.split(',').next().unwrap();
    assert!(
        ["continuous", "bistability", "ua_coexistence"].contains(&tag),
        "unexpected outcome tag {tag}"
    );
    assert!(!spec.out_dir.join("branches.svg").exists(), "plots were disabled");

    replot(&spec.out_dir.join("branches.csv"), &spec.out_dir.join("branches.svg")).unwrap();
    assert!(spec.out_dir.join("branches.svg").exists());
}
