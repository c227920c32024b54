//! Batch CLI over the rcbasin-core task harness.
//!
//! Every subcommand resolves a [`TaskSpec`] from built-in defaults, an
//! optional config file (`--config`, either a plain override file or a
//! previous run's `manifest.toml`), and command-line flags, then runs the
//! corresponding harness entry point. Exit code 0 on success, 2 on
//! configuration errors, 3 on numerical aborts.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rcbasin_core::harness::{
    classify_file, generate_dataset, load_config_file, run_sweep, LoadedConfig, SweepRequest,
};
use rcbasin_core::{
    harness, resolve_spec, run_task1, run_task2, run_task3, systems, Branch, BranchStatus,
    CliOverrides, Error, ExtremumKind, SourceSystem, SweepParameter, TaskKind,
};

#[derive(Parser)]
#[command(
    name = "rcbasin",
    version,
    about = "Reservoir-computing basin and bifurcation batch runner"
)]
struct Cli {
    /// Config file: task overrides, or a manifest.toml from a previous run
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Base seed of the run's seed schedule
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (defaults to all cores)
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,

    /// Stretch sweep transients: settle 3000 time units, measure up to 30000
    #[arg(long, global = true)]
    long_transient: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a source system and write the trajectory as CSV
    GenData {
        /// Source system: lorenz | sprott:A | halvorsen | halvorsen-overlap
        #[arg(long, value_name = "NAME")]
        system: String,
        /// Length of the emitted trajectory in time units
        #[arg(long, default_value_t = 300.0, value_name = "T")]
        duration: f64,
        /// Output file (default: <out>/data.csv)
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Lorenz scenario ensemble over a spectral-radius grid
    Task1,
    /// Train on a pair of cascade attractors and sweep the bias between them
    Task2 {
        /// Use the three-attractor training set instead of the pair
        #[arg(long)]
        multi: bool,
    },
    /// Train on Lorenz plus overlapped Halvorsen and sweep the bias
    Task3,
    /// Classify a trajectory CSV against the Lorenz reference
    Classify {
        /// Trajectory CSV (t,x1,x2,x3 rows)
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Classification CSV to write (default: <out>/classification.csv)
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Parameter continuation from saved network and readout files
    Sweep {
        /// Saved network file
        #[arg(long, value_name = "PATH")]
        network: PathBuf,
        /// Saved readout file (required for bias sweeps)
        #[arg(long, value_name = "PATH")]
        readout: Option<PathBuf>,
        /// Continuation parameter
        #[arg(long, value_enum, default_value_t = ParameterArg::Bias)]
        parameter: ParameterArg,
        #[arg(long, value_name = "X")]
        start: f64,
        #[arg(long, value_name = "X")]
        stop: f64,
        /// Grid step (defaults to the plan's step for the parameter)
        #[arg(long, value_name = "DX")]
        step: Option<f64>,
        /// Output coordinate whose extrema are recorded (0-based)
        #[arg(long, default_value_t = 0, value_name = "I")]
        coordinate: usize,
        /// Extremum kind recorded at each parameter value
        #[arg(long, value_enum, default_value_t = KindArg::Max)]
        kind: KindArg,
        /// Training system for rho sweeps (retrains at each start radius)
        #[arg(long, default_value = "lorenz", value_name = "NAME")]
        system: String,
    },
    /// Re-render an emitted CSV (branch data or ensemble table) as SVG
    Plot {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Output SVG (default: input with .svg extension)
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ParameterArg {
    Bias,
    Rho,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Max,
    Min,
}

fn parse_system(name: &str, tau: f64) -> Result<SourceSystem, Error> {
    if let Ok(sys) = SourceSystem::from_tag(name) {
        return Ok(sys);
    }
    if let Some(a) = name.strip_prefix("sprott:") {
        let a: f64 = a
            .parse()
            .map_err(|_| Error::Config(format!("bad sprott parameter in --system {name}")))?;
        return Ok(SourceSystem::Sprott { a });
    }
    match name {
        "halvorsen" => Ok(SourceSystem::Halvorsen { shift: [0.0; 3] }),
        "halvorsen-overlap" => Ok(SourceSystem::Halvorsen {
            shift: systems::halvorsen_overlap_shift(tau)?,
        }),
        _ => Err(Error::Config(format!(
            "unknown system {name}; expected lorenz, sprott:A, halvorsen, or halvorsen-overlap"
        ))),
    }
}

fn print_branches(branches: &[Branch]) {
    for br in branches {
        let status = match br.status {
            BranchStatus::Alive => "alive".to_string(),
            BranchStatus::Lost { param } => format!("lost at {param:.3}"),
        };
        println!(
            "  branch {}: {} points, {}",
            br.branch_id,
            br.points.len(),
            status
        );
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let loaded = cli.config.as_deref().map(load_config_file).transpose()?;
    let overrides = CliOverrides {
        seed: cli.seed,
        out: cli.out.clone(),
        long_transient: cli.long_transient,
    };
    let out_dir = || cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let utility_cfg = |loaded: &Option<LoadedConfig>| {
        loaded
            .as_ref()
            .map(|l| l.config_for_utilities())
            .unwrap_or_else(rcbasin_core::RCConfig::lorenz_defaults)
    };

    match &cli.command {
        Command::GenData {
            system,
            duration,
            output,
        } => {
            let cfg = utility_cfg(&loaded);
            let sys = parse_system(system, cfg.tau)?;
            let path = output.clone().unwrap_or_else(|| out_dir().join("data.csv"));
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            generate_dataset(&sys, cfg.tau, *duration, &path)?;
            println!("wrote {} ({} time units of {})", path.display(), duration, sys.tag());
        }
        Command::Task1 => {
            let spec = resolve_spec(TaskKind::Task1, loaded, &overrides)?;
            let report = run_task1(&spec)?;
            let table = &report.ensemble.table;
            println!("scenario counts over {} matrices:", spec.n_matrices);
            println!("  rho    s1   s2   s3   s4   s5");
            for (rho, counts) in table.rhos.iter().zip(&table.counts) {
                println!(
                    "  {:<5} {:>4} {:>4} {:>4} {:>4} {:>4}",
                    rho, counts[0], counts[1], counts[2], counts[3], counts[4]
                );
            }
            if !report.ensemble.failures.is_empty() {
                println!("  {} cells failed; see matrix_map.csv", report.ensemble.failures.len());
            }
            println!("fine-grid branches: {}", report.fine_branches.len());
            println!("outputs in {}", spec.out_dir.display());
        }
        Command::Task2 { multi } => {
            let kind = if *multi { TaskKind::Task2Multi } else { TaskKind::Task2 };
            let spec = resolve_spec(kind, loaded, &overrides)?;
            let out = run_task2(&spec)?;
            print_sweep_output(&spec, &out);
        }
        Command::Task3 => {
            let spec = resolve_spec(TaskKind::Task3, loaded, &overrides)?;
            let out = run_task3(&spec)?;
            print_sweep_output(&spec, &out);
        }
        Command::Classify { input, output } => {
            let cfg = utility_cfg(&loaded);
            let params = rcbasin_core::ClassifierParams::default();
            let out_csv = output
                .clone()
                .unwrap_or_else(|| out_dir().join("classification.csv"));
            if let Some(parent) = out_csv.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let outcome = classify_file(input, &out_csv, &cfg, &params)?;
            println!(
                "label: {} (c1 {}, in box: {}, on reference: {})",
                outcome.label.value.tag(),
                outcome.label.c1.tag(),
                outcome.label.c2,
                outcome.label.c3,
            );
            if let Some(d) = outcome.max_c3_distance {
                println!("max distance to reference structure: {d:.3}");
            }
            println!("wrote {}", out_csv.display());
        }
        Command::Sweep {
            network,
            readout,
            parameter,
            start,
            stop,
            step,
            coordinate,
            kind,
            system,
        } => {
            let cfg = utility_cfg(&loaded);
            let req = SweepRequest {
                network: network.clone(),
                readout: readout.clone(),
                parameter: match parameter {
                    ParameterArg::Bias => SweepParameter::Bias,
                    ParameterArg::Rho => SweepParameter::Rho,
                },
                start: *start,
                stop: *stop,
                step: *step,
                coordinate: *coordinate,
                kind: match kind {
                    KindArg::Max => ExtremumKind::Maxima,
                    KindArg::Min => ExtremumKind::Minima,
                },
                system: parse_system(system, cfg.tau)?,
                seed: cli.seed.unwrap_or(1),
                long_transient: cli.long_transient,
                emit_plots: true,
                out_dir: out_dir(),
                config: cfg,
            };
            let branches = run_sweep(&req)?;
            println!("swept {} branch(es):", branches.len());
            print_branches(&branches);
            println!("outputs in {}", req.out_dir.display());
        }
        Command::Plot { input, output } => {
            let out_path = output
                .clone()
                .unwrap_or_else(|| input.with_extension("svg"));
            harness::replot(input, &out_path)?;
            println!("wrote {}", out_path.display());
        }
    }
    Ok(())
}

fn print_sweep_output(spec: &rcbasin_core::TaskSpec, out: &harness::SweepTaskOutput) {
    println!("trained attractors:");
    for t in &out.trained {
        let period = t.period.as_ref().map(|p| p.tag()).unwrap_or_else(|| "none".into());
        let expected = t.expected.as_ref().map(|p| p.tag()).unwrap_or_else(|| "none".into());
        println!(
            "  b {:+.3} ({}): {} {} (expected {}) {}",
            t.bias,
            t.system.tag(),
            t.c1.tag(),
            period,
            expected,
            if t.ok { "ok" } else { "MISMATCH" }
        );
    }
    println!("branches: {}", out.branches.len());
    print_branches(&out.branches);
    println!(
        "untrained-attractor candidates: {} ({} confirmed and swept)",
        out.ua_candidates, out.ua_confirmed
    );
    if let Some(outcome) = &out.outcome {
        println!("gap outcome: {}", outcome.tag());
    }
    println!("outputs in {}", spec.out_dir.display());
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Parse { .. } => 2,
                Error::Divergence { .. }
                | Error::InvalidRescale
                | Error::SingularRidge
                | Error::InsufficientData(_)
                | Error::Shape(_)
                | Error::Numeric(_) => 3,
                Error::Io(_) => 1,
            };
            ExitCode::from(code)
        }
    }
}
