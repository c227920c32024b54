//! Scratch driver: scans base seeds for the bias-pair tasks and prints the
//! trained-output verification per seed.

use rcbasin_core::classification::{count_period, detect_c1};
use rcbasin_core::config::Seeds;
use rcbasin_core::numerics::local_extrema;
use rcbasin_core::reservoir::closed_loop_run;
use rcbasin_core::systems::generate_training_signal;
use rcbasin_core::training::train_parameter_aware;
use rcbasin_core::{ClassifierParams, ExtremumKind, Network, SourceSystem, TaskKind, TaskSpec};

fn sweep_mode(task: &str, seed: u64, b_mag: f64, out_root: &str) {
    use rcbasin_core::classification::PeriodCount;
    use rcbasin_core::{run_task2, run_task3, TaskSpec};

    let kind = if task == "task3" { TaskKind::Task3 } else { TaskKind::Task2 };
    let mut spec = TaskSpec::defaults(kind);
    spec.base_seed = seed;
    spec.config.seeds = Seeds::new(seed, seed, seed);
    spec.b_magnitude = b_mag;
    if kind == TaskKind::Task2 {
        spec.sprott_train = vec![
            rcbasin_core::harness::SprottPoint { a: 17.0, b: b_mag },
            rcbasin_core::harness::SprottPoint { a: 27.0, b: -b_mag },
        ];
    }
    spec.n_ic = 6;
    spec.emit_plots = false;
    spec.out_dir = std::path::PathBuf::from(format!("{out_root}/{}_s{seed}", kind.tag()));
    let t0 = std::time::Instant::now();
    let out = match kind {
        TaskKind::Task3 => run_task3(&spec),
        _ => run_task2(&spec),
    };
    let out = match out {
        Ok(o) => o,
        Err(e) => {
            println!("seed {seed}: task failed: {e}");
            return;
        }
    };
    println!(
        "seed {seed}: {} branches, ua {} of {} confirmed, {:.0?}",
        out.branches.len(),
        out.ua_confirmed,
        out.ua_candidates,
        t0.elapsed()
    );
    for br in &out.branches {
        let mut seq: Vec<String> = Vec::new();
        for pt in &br.points {
            let tag = match &pt.period {
                PeriodCount::Periodic(n) => n.to_string(),
                PeriodCount::Aperiodic => "A".into(),
            };
            if seq.last() != Some(&tag) {
                seq.push(tag);
            }
        }
        println!(
            "  {} [{}] {:?} collapsed periods: {}",
            br.branch_id,
            br.points.len(),
            br.status,
            seq.join(">")
        );
    }
    if let Some(outcome) = &out.outcome {
        println!("  outcome: {outcome:?}");
    }
}

fn lorenz_mode(lo: u64, hi: u64, rhos: &[f64]) {
    use rcbasin_core::classification::{classify_output, ReferenceFit};
    use rcbasin_core::training::train_single;
    use rcbasin_core::{RCConfig, TaskKind, TaskSpec};
    let _ = TaskKind::Task1;

    let params = ClassifierParams::default();
    let base = TaskSpec::defaults(TaskKind::Task1);
    let reference =
        generate_training_signal(&SourceSystem::Lorenz, base.config.tau, base.config.t_train)
            .unwrap();
    let fit = ReferenceFit::fit(&reference.trajectory, &params).unwrap();

    for seed in lo..=hi {
        let mut line = format!("seed {seed}:");
        for &rho in rhos {
            let mut cfg: RCConfig = base.config.clone();
            cfg.rho = rho;
            cfg.seeds = Seeds::new(seed, base.base_seed, seed);
            let net = match Network::build(&cfg) {
                Ok(n) => n,
                Err(e) => {
                    line.push_str(&format!("  rho {rho}: build err {e}"));
                    continue;
                }
            };
            let trained = match train_single(&SourceSystem::Lorenz, &cfg, &net) {
                Ok(t) => t,
                Err(e) => {
                    line.push_str(&format!("  rho {rho}: train err {e}"));
                    continue;
                }
            };
            match closed_loop_run(
                &net,
                &trained.readout,
                &cfg,
                0.0,
                &trained.warm_starts[0],
                cfg.predict_steps(),
                false,
            ) {
                Ok(run) => {
                    let window = run.observed.window_from(cfg.trans_offset());
                    let outcome = classify_output(&window, &fit, &params).unwrap();
                    line.push_str(&format!(
                        "  rho {rho}: {} rms {:.1e}",
                        outcome.label.value.tag(),
                        trained.residuals[0]
                    ));
                    if std::env::var("SEEDSCAN_VERBOSE").is_ok() {
                        let ranges: Vec<String> = (0..window.dim)
                            .map(|c| {
                                let s = window.coordinate(c);
                                let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
                                let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                                format!("x{} [{lo:.1}, {hi:.1}]", c + 1)
                            })
                            .collect();
                        line.push_str(&format!(
                            "\n    c1 {} c2 {} c3 {} dist {:?} {}",
                            outcome.label.c1.tag(),
                            outcome.label.c2,
                            outcome.label.c3,
                            outcome.max_c3_distance,
                            ranges.join(" ")
                        ));
                    }
                }
                Err(e) => line.push_str(&format!("  rho {rho}: run err {e}")),
            }
        }
        println!("{line}");
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let task = args.get(1).map(|s| s.as_str()).unwrap_or("task2");
    if task == "lorenz" {
        let lo: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
        let hi: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8);
        let rhos: Vec<f64> = args
            .get(4)
            .map(|s| s.split(',').map(|v| v.parse().unwrap()).collect())
            .unwrap_or_else(|| vec![0.15, 0.5, 1.0]);
        lorenz_mode(lo, hi, &rhos);
        return;
    }
    if let Some(rest) = task.strip_prefix("sweep-") {
        let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
        let b_mag: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.4);
        let out_root = args.get(4).cloned().unwrap_or_else(|| "/tmp/sweepscan".into());
        sweep_mode(rest, seed, b_mag, &out_root);
        return;
    }
    let lo: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let hi: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(12);
    let b_mag: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.2);

    let kind = ExtremumKind::Minima;
    let params = ClassifierParams::default();

    for seed in lo..=hi {
        let mut spec = match task {
            "task2" => TaskSpec::defaults(TaskKind::Task2),
            "task3" => TaskSpec::defaults(TaskKind::Task3),
            other => panic!("unknown task {other}"),
        };
        spec.base_seed = seed;
        spec.b_magnitude = b_mag;
        spec.config.seeds = Seeds::new(seed, seed, seed);
        let coordinate = if task == "task2" { 1 } else { 0 };
        let systems: Vec<(SourceSystem, f64)> = if task == "task2" {
            vec![
                (SourceSystem::Sprott { a: 17.0 }, b_mag),
                (SourceSystem::Sprott { a: 27.0 }, -b_mag),
            ]
        } else {
            let shift = rcbasin_core::systems::halvorsen_overlap_shift(spec.config.tau).unwrap();
            vec![
                (SourceSystem::Lorenz, b_mag),
                (SourceSystem::Halvorsen { shift }, -b_mag),
            ]
        };
        let cfg = &spec.config;
        let net = match Network::build(cfg) {
            Ok(n) => n,
            Err(e) => {
                println!("seed {seed}: network build failed: {e}");
                continue;
            }
        };
        let trained = match train_parameter_aware(&systems, cfg, &net) {
            Ok(t) => t,
            Err(e) => {
                println!("seed {seed}: training failed: {e}");
                continue;
            }
        };
        let mut line = format!("seed {seed}:");
        for (i, (system, bias)) in systems.iter().enumerate() {
            let ground = generate_training_signal(system, cfg.tau, cfg.t_train).unwrap();
            let expected = count_period(&ground.trajectory, coordinate, kind, &params)
                .map(|p| p.tag())
                .unwrap_or_else(|e| format!("err({e})"));
            let run = match closed_loop_run(
                &net,
                &trained.readout,
                cfg,
                *bias,
                &trained.warm_starts[i],
                cfg.predict_steps(),
                false,
            ) {
                Ok(r) => r,
                Err(e) => {
                    line.push_str(&format!("  b{bias:+.2}: run failed ({e})"));
                    continue;
                }
            };
            let window = run.observed.window_from(cfg.trans_offset());
            let c1 = detect_c1(&window, &params).unwrap();
            let period = count_period(&window, coordinate, kind, &params)
                .map(|p| p.tag())
                .unwrap_or_else(|e| format!("err({e})"));
            let rms = trained.residuals[i];
            line.push_str(&format!(
                "  b{bias:+.2}: {}/{} want {} rms {rms:.1e}",
                c1.tag(),
                period,
                expected
            ));
            if std::env::var("SEEDSCAN_VERBOSE").is_ok() {
                let series = window.coordinate(coordinate);
                let ext = local_extrema(&series, kind);
                let tail: Vec<String> = ext
                    .values
                    .iter()
                    .rev()
                    .take(12)
                    .map(|v| format!("{v:.5}"))
                    .collect();
                line.push_str(&format!("\n    last minima: [{}]", tail.join(", ")));
            }
        }
        println!("{line}");
    }
}
