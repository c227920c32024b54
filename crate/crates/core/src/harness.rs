//! Batch orchestration: task specifications, run manifests, and the worker
//! functions behind the CLI subcommands.

use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::classification::{
    classify_output, count_period, dedup_attractors, detect_c1, write_classification_csv,
    BasinRecord, C1Class, ClassificationOutcome, ClassifierParams, ExtremaSignature, PeriodCount,
    ReferenceFit,
};
use crate::config::{network_seed, RCConfig, Seeds};
use crate::continuation::{
    basin_sample, confirm_ua, emit_bifurcation_data, scenario_ensemble, sweep_branch,
    write_branch_csv, write_ensemble_csv, write_matrix_map_csv, BiasSweep, BifurcationRow, Branch,
    EnsembleOutput, RhoSweep, ScenarioTable, SweepParameter, SweepPlan,
};
use crate::numerics::ExtremumKind;
use crate::plot::{plot_branches, plot_ensemble};
use crate::reservoir::{closed_loop_run, random_reservoir_state, Network, RawNetwork, Readout};
use crate::systems::{
    generate_training_signal, halvorsen_overlap_shift, read_trajectory_csv, write_trajectory_csv,
    SourceSystem,
};
use crate::training::{train_parameter_aware, train_single};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Task1,
    Task2,
    Task2Multi,
    Task3,
}

impl TaskKind {
    pub fn tag(self) -> &'static str {
        match self {
            TaskKind::Task1 => "task1",
            TaskKind::Task2 => "task2",
            TaskKind::Task2Multi => "task2_multi",
            TaskKind::Task3 => "task3",
        }
    }

    fn family(self) -> u8 {
        match self {
            TaskKind::Task1 => 1,
            TaskKind::Task2 | TaskKind::Task2Multi => 2,
            TaskKind::Task3 => 3,
        }
    }
}

/// How far b-sweeps extend: the full configured range from every seed, or
/// only the stretch between the outermost training biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepScope {
    Full,
    InterTrain,
}

/// One parameter-aware training point: Sprott parameter and its bias.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SprottPoint {
    pub a: f64,
    pub b: f64,
}

/// Optional fine spectral-radius sweep appended to task 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineRho {
    pub start: f64,
    pub stop: f64,
    #[serde(default = "default_fine_rho_step")]
    pub step: f64,
    /// Ensemble matrix index whose raw sample the sweep rescales.
    #[serde(default)]
    pub matrix: usize,
}

fn default_fine_rho_step() -> f64 {
    0.005
}

/// A fully resolved experiment description. Scalar fields first so the
/// manifest serialises as valid TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: TaskKind,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    pub n_matrices: usize,
    pub n_ic: usize,
    pub b_magnitude: f64,
    pub sweep_lo: f64,
    pub sweep_hi: f64,
    pub sweep_step: f64,
    pub sweep_scope: SweepScope,
    pub long_transient: bool,
    pub emit_plots: bool,
    pub rho_grid: Vec<f64>,
    pub sprott_train: Vec<SprottPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_rho: Option<FineRho>,
    pub config: RCConfig,
}

impl TaskSpec {
    pub fn defaults(task: TaskKind) -> TaskSpec {
        let mut spec = TaskSpec {
            task,
            base_seed: 1,
            out_dir: PathBuf::from(format!("out/{}", task.tag())),
            n_matrices: 50,
            n_ic: 100,
            b_magnitude: 0.2,
            sweep_lo: -0.42,
            sweep_hi: 0.42,
            sweep_step: 0.002,
            sweep_scope: SweepScope::Full,
            long_transient: false,
            emit_plots: true,
            rho_grid: Vec::new(),
            sprott_train: Vec::new(),
            fine_rho: None,
            config: RCConfig::lorenz_defaults(),
        };
        match task {
            TaskKind::Task1 => {
                spec.rho_grid = (0..=20).map(|i| i as f64 / 20.0).collect();
            }
            TaskKind::Task2 => {
                spec.config = RCConfig::sprott_pair_defaults();
                spec.sprott_train = vec![
                    SprottPoint { a: 17.0, b: 0.2 },
                    SprottPoint { a: 27.0, b: -0.2 },
                ];
            }
            TaskKind::Task2Multi => {
                spec.config = RCConfig::sprott_pair_defaults();
                spec.config.rho = 1.4;
                spec.config.sigma = 1.3;
                spec.sprott_train = vec![
                    SprottPoint { a: 17.0, b: 0.2 },
                    SprottPoint { a: 22.0, b: 0.0 },
                    SprottPoint { a: 27.0, b: -0.2 },
                ];
            }
            TaskKind::Task3 => {
                spec.config = RCConfig::lorenz_halvorsen_defaults();
                spec.config.t_listen = 100.0;
                spec.config.t_train = 300.0;
                spec.config.t_predict = 500.0;
                spec.config.t_trans = 370.0;
                spec.b_magnitude = 0.3;
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let t = self.task;
        if t == TaskKind::Task1 {
            if self.rho_grid.is_empty() {
                return Err(Error::Config("task1 needs a non-empty rho grid".into()));
            }
            if self.n_matrices == 0 || self.n_ic == 0 {
                return Err(Error::Config("ensemble sizes must be positive".into()));
            }
            if let Some(f) = &self.fine_rho {
                if f.step <= 0.0 || f.start == f.stop || f.start < 0.0 || f.stop < 0.0 {
                    return Err(Error::Config("fine rho sweep range is degenerate".into()));
                }
            }
        } else {
            if !(self.sweep_step > 0.0) {
                return Err(Error::Config("sweep step must be positive".into()));
            }
            if self.sweep_lo >= self.sweep_hi {
                return Err(Error::Config("sweep range must satisfy lo < hi".into()));
            }
        }
        if matches!(t, TaskKind::Task2 | TaskKind::Task2Multi) && self.sprott_train.is_empty() {
            return Err(Error::Config("task2 needs at least one training bias".into()));
        }
        if t == TaskKind::Task3 && self.b_magnitude <= 0.0 {
            return Err(Error::Config("task3 bias magnitude must be positive".into()));
        }
        Ok(())
    }

    /// Bias-sweep plan at this spec's step size and transient mode.
    pub fn bias_plan(&self, start: f64, stop: f64, coordinate: usize, kind: ExtremumKind) -> SweepPlan {
        let mut plan = SweepPlan::bias_sweep(start, stop, coordinate, kind);
        plan.step = self.sweep_step * if stop >= start { 1.0 } else { -1.0 };
        if self.long_transient {
            plan.t_settle = 3000.0;
        }
        plan
    }

    /// Per-step time budget available to sweep plans.
    pub fn step_budget(&self) -> f64 {
        if self.long_transient {
            30_000.0
        } else {
            self.config.t_predict
        }
    }
}

/// Partial settings from a `--config` file, applied over task defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecOverrides {
    pub task: Option<TaskKind>,
    pub base_seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub n_matrices: Option<usize>,
    pub n_ic: Option<usize>,
    pub b_magnitude: Option<f64>,
    pub sweep_lo: Option<f64>,
    pub sweep_hi: Option<f64>,
    pub sweep_step: Option<f64>,
    pub sweep_scope: Option<SweepScope>,
    pub long_transient: Option<bool>,
    pub emit_plots: Option<bool>,
    pub rho_grid: Option<Vec<f64>>,
    pub sprott_train: Option<Vec<SprottPoint>>,
    pub fine_rho: Option<FineRho>,
    pub config: ConfigPatch,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigPatch {
    pub n: Option<usize>,
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub connect_p: Option<f64>,
    pub t_listen: Option<f64>,
    pub t_train: Option<f64>,
    pub t_predict: Option<f64>,
    pub t_trans: Option<f64>,
    pub bias: Option<f64>,
}

impl ConfigPatch {
    pub fn apply(&self, cfg: &mut RCConfig) {
        macro_rules! put {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        put!(n);
        put!(rho);
        put!(sigma);
        put!(gamma);
        put!(beta);
        put!(tau);
        put!(connect_p);
        put!(t_listen);
        put!(t_train);
        put!(t_predict);
        put!(t_trans);
        put!(bias);
    }
}

/// A parsed `--config` file: either partial overrides or a full spec
/// recovered from a run manifest.
pub enum LoadedConfig {
    Overrides(SpecOverrides),
    Manifest(Box<TaskSpec>),
}

impl LoadedConfig {
    pub fn config_for_utilities(&self) -> RCConfig {
        match self {
            LoadedConfig::Manifest(spec) => spec.config.clone(),
            LoadedConfig::Overrides(o) => {
                let mut cfg = RCConfig::lorenz_defaults();
                o.config.apply(&mut cfg);
                cfg
            }
        }
    }
}

pub fn load_config_file(path: &Path) -> Result<LoadedConfig> {
    let text = crate::read_input(path)?;
    let parse_err = |e: toml::de::Error| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let table: toml::Table = text.parse().map_err(parse_err)?;
    if table.get("spec").is_some() {
        let manifest: RunManifest = toml::from_str(&text).map_err(parse_err)?;
        Ok(LoadedConfig::Manifest(Box::new(manifest.spec)))
    } else {
        let overrides: SpecOverrides = toml::from_str(&text).map_err(parse_err)?;
        Ok(LoadedConfig::Overrides(overrides))
    }
}

/// Command-line values that take precedence over any config file.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub long_transient: bool,
}

/// Merges task defaults, an optional config file, and CLI flags into a
/// runnable spec. The file may refine the task within the subcommand's
/// family (`task2` to `task2_multi`) but not change family.
pub fn resolve_spec(
    cli_kind: TaskKind,
    loaded: Option<LoadedConfig>,
    cli: &CliOverrides,
) -> Result<TaskSpec> {
    let mut spec = match loaded {
        Some(LoadedConfig::Manifest(full)) => {
            if full.task.family() != cli_kind.family() {
                return Err(Error::Config(format!(
                    "manifest describes {} but the {} command was invoked",
                    full.task.tag(),
                    cli_kind.tag()
                )));
            }
            *full
        }
        Some(LoadedConfig::Overrides(o)) => {
            let kind = match o.task {
                None => cli_kind,
                Some(t) if t.family() != cli_kind.family() => {
                    return Err(Error::Config(format!(
                        "config file sets task {} but the {} command was invoked",
                        t.tag(),
                        cli_kind.tag()
                    )));
                }
                Some(t) => {
                    if cli_kind == TaskKind::Task2Multi {
                        TaskKind::Task2Multi
                    } else {
                        t
                    }
                }
            };
            let mut spec = TaskSpec::defaults(kind);
            apply_overrides(&o, &mut spec);
            spec
        }
        None => TaskSpec::defaults(cli_kind),
    };
    if let Some(seed) = cli.seed {
        spec.base_seed = seed;
    }
    if let Some(out) = &cli.out {
        spec.out_dir = out.clone();
    }
    if cli.long_transient {
        spec.long_transient = true;
    }
    spec.config.seeds = Seeds::new(spec.base_seed, spec.base_seed, spec.base_seed);
    spec.validate()?;
    Ok(spec)
}

fn apply_overrides(o: &SpecOverrides, spec: &mut TaskSpec) {
    macro_rules! put {
        ($field:ident) => {
            if let Some(v) = &o.$field {
                spec.$field = v.clone();
            }
        };
    }
    put!(base_seed);
    put!(out_dir);
    put!(n_matrices);
    put!(n_ic);
    put!(b_magnitude);
    put!(sweep_lo);
    put!(sweep_hi);
    put!(sweep_step);
    put!(sweep_scope);
    put!(long_transient);
    put!(emit_plots);
    put!(rho_grid);
    put!(sprott_train);
    if o.fine_rho.is_some() {
        spec.fine_rho = o.fine_rho;
    }
    o.config.apply(&mut spec.config);
    // A bare bias magnitude regenerates the default Sprott pair.
    if spec.task == TaskKind::Task2 && o.b_magnitude.is_some() && o.sprott_train.is_none() {
        let m = spec.b_magnitude;
        spec.sprott_train = vec![
            SprottPoint { a: 17.0, b: m },
            SprottPoint { a: 27.0, b: -m },
        ];
    }
}

/// Everything needed to regenerate a run's outputs byte-for-byte, plus the
/// numerical conventions the run was produced under.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub created_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halvorsen_shift: Option<[f64; 3]>,
    pub decisions: Vec<String>,
    pub spec: TaskSpec,
}

impl RunManifest {
    pub fn new(spec: &TaskSpec, halvorsen_shift: Option<[f64; 3]>) -> RunManifest {
        RunManifest {
            artifact_version: format!("rcbasin-core {}", env!("CARGO_PKG_VERSION")),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            halvorsen_shift,
            decisions: ledger(spec, halvorsen_shift),
            spec: spec.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialisation failed: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = crate::read_input(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// The numerical conventions in force, echoed into every manifest so a run
/// is interpretable without the source tree.
fn ledger(spec: &TaskSpec, halvorsen_shift: Option<[f64; 3]>) -> Vec<String> {
    let c = ClassifierParams::default();
    let cfg = &spec.config;
    let settle = if spec.long_transient { 3000.0 } else { 70.0 };
    let mut notes = vec![
        format!(
            "integration: fixed-step RK4 at tau = {}, zero-order hold on the drive signal; the \
             closed loop holds its fed-back readout constant across each step the same way, so \
             prediction sees the input timing the readout was fitted to",
            cfg.tau
        ),
        format!(
            "network: connection probability {} with uniform(-1,1) nonzero weights, one input \
             weight per row, rescaled to the target spectral radius (zero-radius draws resampled)",
            cfg.connect_p
        ),
        "lorenz: dx1/dt = 10(x2 - x1) with parameters (10, 28, 8/3), integrated from (1,1,1)"
            .to_string(),
        "sprott: start states below a = 27 reached by walking a down from 27 in 0.5 steps \
         with 100-unit settles, keeping one period-doubling branch among the coexisting \
         cycles; extrema cluster tol sized to the a = 17 period-4 gaps (~0.003)"
            .to_string(),
        "training: readout fitted on drive samples from t_listen through t_train inclusive"
            .to_string(),
        format!(
            "classifier: fixed-point range tol {}, periodicity tol {}, max period {}, extrema \
             cluster tol {}, line margin {}, signature cluster tol {}, signature match tol {}",
            c.eps_fp, c.eps_per, c.max_period, c.eps_cluster, c.alpha, c.sig_cluster_tol, c.match_tol
        ),
        format!(
            "basin sampling: reservoir states uniform on [-1,1]^N; ic seed j = base*1e6 + j, \
             matrix i network seed = base + i, shared input matrix from base"
        ),
        format!(
            "sweeps: settle {settle} then measure 130 per step; branch lost when sorted extrema \
             move more than 0.5 and a doubled-settle retry agrees; b step {}, fine rho step {}",
            spec.sweep_step,
            spec.fine_rho.map_or(0.005, |f| f.step)
        ),
    ];
    if let Some(s) = halvorsen_shift {
        notes.push(format!(
            "halvorsen: translated by ({}, {}, {}), the centroid difference against a lorenz \
             reference trajectory",
            s[0], s[1], s[2]
        ));
    }
    if spec.long_transient {
        notes.push("long-transient mode: per-step settle 3000 within a 30000 budget".to_string());
    }
    notes
}

/// Which of the three gap-filling outcomes a task-3 sweep produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GapOutcome {
    /// One branch connects both trained attractors.
    Continuous,
    /// Both trained families stay alive over `[lo, hi]`.
    Bistability { lo: f64, hi: f64 },
    /// Neither family reaches `(lo, hi)`; something untrained fills it.
    UaCoexistence { lo: f64, hi: f64 },
}

impl GapOutcome {
    pub fn tag(&self) -> &'static str {
        match self {
            GapOutcome::Continuous => "continuous",
            GapOutcome::Bistability { .. } => "bistability",
            GapOutcome::UaCoexistence { .. } => "ua_coexistence",
        }
    }
}

/// Decides the gap outcome from the branch family swept down from the
/// upper trained bias and the family swept up from the lower one. The
/// first branch of each list must be the one seeded from the trained
/// attractor.
pub fn classify_gap_outcome(
    l_down: &[Branch],
    h_up: &[Branch],
    b_plus: f64,
    b_minus: f64,
    step: f64,
) -> GapOutcome {
    let half = step.abs() / 2.0 + 1e-12;
    let spans = |br: &&Branch| {
        let lo = br
            .points
            .iter()
            .map(|p| p.param)
            .fold(f64::INFINITY, f64::min);
        let hi = br
            .points
            .iter()
            .map(|p| p.param)
            .fold(f64::NEG_INFINITY, f64::max);
        lo <= b_minus + half && hi >= b_plus - half
    };
    if l_down.iter().chain(h_up.iter()).any(|b| spans(&b)) {
        return GapOutcome::Continuous;
    }
    let l_reach = l_down.first().and_then(|b| b.last_param());
    let h_reach = h_up.first().and_then(|b| b.last_param());
    match (l_reach, h_reach) {
        (Some(l), Some(h)) if l <= h + half => GapOutcome::Bistability { lo: l, hi: h },
        (Some(l), Some(h)) => GapOutcome::UaCoexistence { lo: h, hi: l },
        _ => GapOutcome::UaCoexistence {
            lo: b_minus,
            hi: b_plus,
        },
    }
}

pub struct Task1Report {
    pub ensemble: EnsembleOutput,
    pub fine_branches: Vec<Branch>,
}

/// Runs the spectral-radius ensemble and writes the frequency table, the
/// per-matrix scenario map, and per-cell classification files.
pub fn run_task1(spec: &TaskSpec) -> Result<Task1Report> {
    if spec.task != TaskKind::Task1 {
        return Err(Error::Config(format!(
            "run_task1 invoked with a {} spec",
            spec.task.tag()
        )));
    }
    spec.validate()?;
    let out = &spec.out_dir;
    fs::create_dir_all(out.join("cells"))?;
    RunManifest::new(spec, None).write(&out.join("manifest.toml"))?;

    let params = ClassifierParams::default();
    let cfg = &spec.config;
    let reference = generate_training_signal(&SourceSystem::Lorenz, cfg.tau, cfg.t_train)?;
    let fit = ReferenceFit::fit(&reference.trajectory, &params)?;

    let ensemble = scenario_ensemble(
        cfg,
        &SourceSystem::Lorenz,
        &spec.rho_grid,
        spec.n_matrices,
        spec.n_ic,
        spec.base_seed,
        &fit,
        &params,
    )?;
    write_ensemble_csv(&out.join("ensemble.csv"), &ensemble.table)?;
    write_matrix_map_csv(&out.join("matrix_map.csv"), &ensemble.cells)?;
    for cell in &ensemble.cells {
        let stem = format!("m{:03}_rho{:.3}", cell.matrix_id, cell.rho);
        write_classification_csv(&out.join("cells").join(format!("{stem}.csv")), &stem, &cell.records)?;
    }
    if !ensemble.failures.is_empty() {
        let mut w = BufWriter::new(File::create(out.join("failures.csv"))?);
        writeln!(w, "matrix_id,rho,message")?;
        for f in &ensemble.failures {
            log::warn!("cell ({}, {:.3}) failed: {}", f.matrix_id, f.rho, f.message);
            writeln!(w, "{},{:.6},{}", f.matrix_id, f.rho, f.message.replace(',', ";"))?;
        }
        w.flush()?;
    }
    if spec.emit_plots {
        plot_ensemble(&out.join("ensemble.svg"), &ensemble.table)?;
    }

    let mut fine_branches = Vec::new();
    if let Some(f) = &spec.fine_rho {
        let raw = RawNetwork::sample(
            cfg.n,
            cfg.dim,
            cfg.connect_p,
            network_seed(spec.base_seed, f.matrix),
            spec.base_seed,
        )?;
        let mut plan = SweepPlan::rho_sweep(f.start, f.stop);
        plan.step = f.step * if f.stop >= f.start { 1.0 } else { -1.0 };
        if spec.long_transient {
            plan.t_settle = 3000.0;
        }
        plan.validate(spec.step_budget())?;
        let mut start_cfg = cfg.clone();
        start_cfg.rho = f.start;
        let start_net = raw.at_rho(f.start)?;
        let seeded = train_single(&SourceSystem::Lorenz, &start_cfg, &start_net)?;
        let mut model = RhoSweep::new(&raw, SourceSystem::Lorenz, cfg.clone());
        fine_branches = sweep_branch(&mut model, &plan, &seeded.warm_starts[0], "rho", &params)?;
        let rows = emit_bifurcation_data(&fine_branches);
        write_branch_csv(&out.join("rho_branches.csv"), &rows, plan.kind, plan.coordinate)?;
        if spec.emit_plots {
            plot_branches(&out.join("rho_branches.svg"), &rows, "rho", "x3 max")?;
        }
    }
    Ok(Task1Report {
        ensemble,
        fine_branches,
    })
}

/// Closed-loop verification result at one trained bias.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub bias: f64,
    pub system: SourceSystem,
    pub c1: C1Class,
    pub period: Option<PeriodCount>,
    pub expected: Option<PeriodCount>,
    pub ok: bool,
    pub signature: ExtremaSignature,
    pub final_state: Vec<f64>,
}

pub struct SweepTaskOutput {
    pub trained: Vec<TrainReport>,
    pub branches: Vec<Branch>,
    pub ua_candidates: usize,
    pub ua_confirmed: usize,
    pub branch_csv: PathBuf,
    pub outcome: Option<GapOutcome>,
}

fn period_tag(p: &Option<PeriodCount>) -> String {
    match p {
        Some(pc) => pc.tag(),
        None => "insufficient".into(),
    }
}

fn short_system_tag(system: &SourceSystem) -> String {
    let tag = system.tag();
    if tag.starts_with("halvorsen") {
        "halvorsen".into()
    } else {
        tag
    }
}

fn write_trained_csv(path: &Path, reports: &[TrainReport]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "bias,system,c1,period,expected,ok,signature_hash")?;
    for r in reports {
        writeln!(
            w,
            "{:+.6},{},{},{},{},{},{:016x}",
            r.bias,
            short_system_tag(&r.system),
            r.c1.tag(),
            period_tag(&r.period),
            period_tag(&r.expected),
            r.ok,
            r.signature.hash_id()
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Trains on the given biased systems, verifies each trained bias, basin
/// samples for untrained attractors, and sweeps the bias from every seed.
fn run_sweep_task(
    spec: &TaskSpec,
    systems: &[(SourceSystem, f64)],
    coordinate: usize,
) -> Result<SweepTaskOutput> {
    let out = &spec.out_dir;
    fs::create_dir_all(out)?;
    let params = ClassifierParams::default();
    let cfg = &spec.config;
    let kind = ExtremumKind::Minima;

    let net = Network::build(cfg)?;
    net.save(&out.join("network.txt"))?;
    let trained = train_parameter_aware(systems, cfg, &net)?;
    trained.readout.save(&out.join("readout.txt"))?;
    for ((system, bias), rms) in systems.iter().zip(&trained.residuals) {
        log::info!(
            "training residual rms {rms:.3e} for {} at b = {bias:+.3}",
            short_system_tag(system)
        );
    }

    let mut reports = Vec::with_capacity(systems.len());
    for (i, (system, bias)) in systems.iter().enumerate() {
        let ground = generate_training_signal(system, cfg.tau, cfg.t_train)?;
        let ground_c1 = detect_c1(&ground.trajectory, &params)?;
        let expected = count_period(&ground.trajectory, coordinate, kind, &params).ok();
        let run = closed_loop_run(
            &net,
            &trained.readout,
            cfg,
            *bias,
            &trained.warm_starts[i],
            cfg.predict_steps(),
            false,
        )?;
        let window = run.observed.window_from(cfg.trans_offset());
        let c1 = detect_c1(&window, &params)?;
        let period = count_period(&window, coordinate, kind, &params).ok();
        let signature = ExtremaSignature::from_window(&window, coordinate, kind, &c1, &params);
        let ok = c1.same_kind(&ground_c1) && period.is_some() && period == expected;
        if !ok {
            log::warn!(
                "reconstruction at b = {bias:+.3} got ({}, {}) but the source gives ({}, {}); \
                 sweeping anyway",
                c1.tag(),
                period_tag(&period),
                ground_c1.tag(),
                period_tag(&expected)
            );
        }
        reports.push(TrainReport {
            bias: *bias,
            system: system.clone(),
            c1,
            period,
            expected,
            ok,
            signature,
            final_state: run.final_state,
        });
    }
    write_trained_csv(&out.join("trained.csv"), &reports)?;

    // Untrained-attractor discovery at each trained bias.
    let mut ua_seeds: Vec<(f64, BasinRecord)> = Vec::new();
    for report in &reports {
        let records = basin_sample(
            &net,
            &trained.readout,
            report.bias,
            cfg,
            None,
            &params,
            coordinate,
            kind,
            spec.n_ic,
            spec.base_seed,
        )?;
        write_classification_csv(
            &out.join(format!("basin_b{:+.3}.csv", report.bias)),
            &format!("b{:+.3}", report.bias),
            &records,
        )?;
        for att in dedup_attractors(records, &params) {
            let rec = att.representative;
            let matches_trained = reports
                .iter()
                .any(|r| r.signature.matches(&rec.signature, params.match_tol));
            let already_seen = ua_seeds.iter().any(|(_, k)| {
                k.c1.same_kind(&rec.c1) && k.signature.matches(&rec.signature, params.match_tol)
            });
            if !matches_trained && !already_seen {
                log::info!(
                    "untrained attractor candidate at b = {:+.3}: {} reached by {} of {} states",
                    report.bias,
                    rec.c1.tag(),
                    att.count,
                    spec.n_ic
                );
                ua_seeds.push((report.bias, rec));
            }
        }
    }

    // Sweep jobs: (start, stop, seed state, family name).
    let mut jobs: Vec<(f64, f64, Vec<f64>, String)> = Vec::new();
    let b_max = reports.iter().map(|r| r.bias).fold(f64::NEG_INFINITY, f64::max);
    let b_min = reports.iter().map(|r| r.bias).fold(f64::INFINITY, f64::min);
    match spec.sweep_scope {
        SweepScope::Full => {
            for r in &reports {
                jobs.push((r.bias, spec.sweep_lo, r.final_state.clone(), format!("b{:+.3}.dn", r.bias)));
                jobs.push((r.bias, spec.sweep_hi, r.final_state.clone(), format!("b{:+.3}.up", r.bias)));
            }
        }
        SweepScope::InterTrain => {
            for r in &reports {
                if r.bias == b_max {
                    jobs.push((r.bias, b_min, r.final_state.clone(), format!("b{:+.3}.dn", r.bias)));
                }
                if r.bias == b_min {
                    jobs.push((r.bias, b_max, r.final_state.clone(), format!("b{:+.3}.up", r.bias)));
                }
            }
        }
    }
    let (ua_lo, ua_hi) = match spec.sweep_scope {
        SweepScope::Full => (spec.sweep_lo, spec.sweep_hi),
        SweepScope::InterTrain => (b_min, b_max),
    };
    for (k, (bias, rec)) in ua_seeds.iter().enumerate() {
        jobs.push((*bias, ua_lo, rec.final_state.clone(), format!("ua{k:02}.dn")));
        jobs.push((*bias, ua_hi, rec.final_state.clone(), format!("ua{k:02}.up")));
    }

    let mut model = BiasSweep {
        net: &net,
        readout: &trained.readout,
        cfg,
    };
    let mut recon_branches: Vec<Branch> = Vec::new();
    let mut ua_branches: Vec<Branch> = Vec::new();
    for (start, stop, seed_state, family) in jobs {
        if (stop - start).abs() < spec.sweep_step / 2.0 {
            continue;
        }
        let plan = spec.bias_plan(start, stop, coordinate, kind);
        plan.validate(spec.step_budget())?;
        let swept = sweep_branch(&mut model, &plan, &seed_state, &family, &params)?;
        if family.starts_with("ua") {
            ua_branches.extend(swept);
        } else {
            recon_branches.extend(swept);
        }
    }

    let ua_confirmed = ua_seeds
        .iter()
        .filter(|(bias, rec)| {
            confirm_ua(
                &rec.signature,
                &recon_branches,
                *bias,
                spec.sweep_step,
                params.match_tol,
            )
        })
        .count();

    let mut branches = recon_branches;
    branches.extend(ua_branches);
    let rows = emit_bifurcation_data(&branches);
    let branch_csv = out.join("branches.csv");
    write_branch_csv(&branch_csv, &rows, kind, coordinate)?;
    if spec.emit_plots {
        plot_branches(
            &out.join("branches.svg"),
            &rows,
            "b",
            &format!("x{} {}", coordinate + 1, kind.tag()),
        )?;
    }
    Ok(SweepTaskOutput {
        trained: reports,
        branches,
        ua_candidates: ua_seeds.len(),
        ua_confirmed,
        branch_csv,
        outcome: None,
    })
}

/// Parameter-aware Sprott training plus the full bias sweep, emitting the
/// x2-minima branch dataset.
pub fn run_task2(spec: &TaskSpec) -> Result<SweepTaskOutput> {
    if !matches!(spec.task, TaskKind::Task2 | TaskKind::Task2Multi) {
        return Err(Error::Config(format!(
            "run_task2 invoked with a {} spec",
            spec.task.tag()
        )));
    }
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    RunManifest::new(spec, None).write(&spec.out_dir.join("manifest.toml"))?;
    let systems: Vec<(SourceSystem, f64)> = spec
        .sprott_train
        .iter()
        .map(|p| (SourceSystem::Sprott { a: p.a }, p.b))
        .collect();
    run_sweep_task(spec, &systems, 1)
}

/// Lorenz/Halvorsen parameter-aware training plus the bias sweep with
/// x1-minima emission and the gap-outcome report.
pub fn run_task3(spec: &TaskSpec) -> Result<SweepTaskOutput> {
    if spec.task != TaskKind::Task3 {
        return Err(Error::Config(format!(
            "run_task3 invoked with a {} spec",
            spec.task.tag()
        )));
    }
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let shift = halvorsen_overlap_shift(spec.config.tau)?;
    RunManifest::new(spec, Some(shift)).write(&spec.out_dir.join("manifest.toml"))?;
    let m = spec.b_magnitude;
    let systems = vec![
        (SourceSystem::Lorenz, m),
        (SourceSystem::Halvorsen { shift }, -m),
    ];
    let mut output = run_sweep_task(spec, &systems, 0)?;

    let l_prefix = format!("b{:+.3}.dn.", m);
    let h_prefix = format!("b{:+.3}.up.", -m);
    let l_down: Vec<Branch> = output
        .branches
        .iter()
        .filter(|b| b.branch_id.starts_with(&l_prefix))
        .cloned()
        .collect();
    let h_up: Vec<Branch> = output
        .branches
        .iter()
        .filter(|b| b.branch_id.starts_with(&h_prefix))
        .cloned()
        .collect();
    let outcome = classify_gap_outcome(&l_down, &h_up, m, -m, spec.sweep_step);
    let mut w = BufWriter::new(File::create(spec.out_dir.join("outcome.csv"))?);
    writeln!(w, "outcome,lo,hi")?;
    match outcome {
        GapOutcome::Continuous => writeln!(w, "continuous,,")?,
        GapOutcome::Bistability { lo, hi } => writeln!(w, "bistability,{lo:.6},{hi:.6}")?,
        GapOutcome::UaCoexistence { lo, hi } => writeln!(w, "ua_coexistence,{lo:.6},{hi:.6}")?,
    }
    w.flush()?;
    output.outcome = Some(outcome);
    Ok(output)
}

/// Classifies a recorded closed-loop output file against a ground-truth
/// Lorenz reference, writing one classification row. The stretch before
/// `t_trans - t_train` is discarded as transient, clamped so short files
/// keep at least the minimum classification window.
pub fn classify_file(
    input: &Path,
    out_csv: &Path,
    cfg: &RCConfig,
    params: &ClassifierParams,
) -> Result<ClassificationOutcome> {
    let traj = read_trajectory_csv(input)?;
    let need = (params.min_window / traj.tau).ceil() as usize + 1;
    let start = traj.len().checked_sub(need).ok_or_else(|| {
        Error::InsufficientData(format!(
            "{} holds {:.1} time units; classification needs at least {}",
            input.display(),
            (traj.len().saturating_sub(1)) as f64 * traj.tau,
            params.min_window
        ))
    })?;
    let window = traj.window_from(start.min(cfg.trans_offset()));
    let reference = generate_training_signal(&SourceSystem::Lorenz, cfg.tau, cfg.t_train)?;
    let fit = ReferenceFit::fit(&reference.trajectory, params)?;
    let outcome = classify_output(&window, &fit, params)?;
    let c1 = detect_c1(&window, params)?;
    let record = BasinRecord {
        ic_index: 0,
        c1,
        signature: outcome.signature.clone(),
        label: Some(outcome.label),
        max_c3_distance: outcome.max_c3_distance,
        final_state: window.sample(window.len() - 1).to_vec(),
    };
    let run_id = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    write_classification_csv(out_csv, &run_id, &[record])?;
    Ok(outcome)
}

/// Writes a ground-truth trajectory CSV for one source system.
pub fn generate_dataset(
    system: &SourceSystem,
    tau: f64,
    duration: f64,
    out_path: &Path,
) -> Result<()> {
    let signal = generate_training_signal(system, tau, duration)?;
    write_trajectory_csv(out_path, &signal.trajectory)
}

/// One standalone sweep from saved network/readout files.
pub struct SweepRequest {
    pub network: PathBuf,
    pub readout: Option<PathBuf>,
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub step: Option<f64>,
    pub coordinate: usize,
    pub kind: ExtremumKind,
    pub system: SourceSystem,
    pub seed: u64,
    pub long_transient: bool,
    pub emit_plots: bool,
    pub out_dir: PathBuf,
    pub config: RCConfig,
}

pub fn run_sweep(req: &SweepRequest) -> Result<Vec<Branch>> {
    fs::create_dir_all(&req.out_dir)?;
    let params = ClassifierParams::default();
    let net = Network::load(&req.network)?;
    let mut plan = match req.parameter {
        SweepParameter::Bias => {
            SweepPlan::bias_sweep(req.start, req.stop, req.coordinate, req.kind)
        }
        SweepParameter::Rho => {
            let mut p = SweepPlan::rho_sweep(req.start, req.stop);
            p.coordinate = req.coordinate;
            p.kind = req.kind;
            p
        }
    };
    if let Some(step) = req.step {
        plan.step = step.abs() * if req.stop >= req.start { 1.0 } else { -1.0 };
    }
    if req.long_transient {
        plan.t_settle = 3000.0;
    }
    let budget = if req.long_transient {
        30_000.0
    } else {
        req.config.t_predict
    };
    plan.validate(budget)?;

    let branches = match req.parameter {
        SweepParameter::Bias => {
            let readout_path = req.readout.as_ref().ok_or_else(|| {
                Error::Config("bias sweeps need --readout with a trained readout file".into())
            })?;
            let readout = Readout::load(readout_path)?;
            let r0 = random_reservoir_state(net.n, req.seed);
            let settled = closed_loop_run(
                &net,
                &readout,
                &req.config,
                req.start,
                &r0,
                req.config.predict_steps(),
                false,
            )?;
            let mut model = BiasSweep {
                net: &net,
                readout: &readout,
                cfg: &req.config,
            };
            sweep_branch(&mut model, &plan, &settled.final_state, "sweep", &params)?
        }
        SweepParameter::Rho => {
            let raw = RawNetwork::sample(
                net.n,
                net.dim,
                net.connect_p,
                net.network_seed,
                net.input_seed,
            )?;
            let mut start_cfg = req.config.clone();
            start_cfg.rho = req.start;
            let start_net = raw.at_rho(req.start)?;
            let seeded = train_single(&req.system, &start_cfg, &start_net)?;
            let mut model = RhoSweep::new(&raw, req.system.clone(), req.config.clone());
            sweep_branch(&mut model, &plan, &seeded.warm_starts[0], "sweep", &params)?
        }
    };
    let rows = emit_bifurcation_data(&branches);
    write_branch_csv(&req.out_dir.join("sweep.csv"), &rows, plan.kind, plan.coordinate)?;
    if req.emit_plots {
        let x_label = match req.parameter {
            SweepParameter::Bias => "b",
            SweepParameter::Rho => "rho",
        };
        plot_branches(
            &req.out_dir.join("sweep.svg"),
            &rows,
            x_label,
            &format!("x{} {}", plan.coordinate + 1, plan.kind.tag()),
        )?;
    }
    Ok(branches)
}

/// Re-renders an emitted CSV (branch dataset or ensemble table) as SVG.
pub fn replot(input: &Path, output: &Path) -> Result<()> {
    let text = crate::read_input(input)?;
    let parse_err = |message: String| Error::Parse {
        path: input.display().to_string(),
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
    if header.starts_with("param,value") {
        let mut rows = Vec::new();
        let mut axis = String::from("value");
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(parse_err(format!("row {} has {} fields", i + 2, fields.len())));
            }
            let bad = |what: &str| parse_err(format!("row {}: bad {what}", i + 2));
            rows.push(BifurcationRow {
                param: fields[0].parse().map_err(|_| bad("param"))?,
                value: fields[1].parse().map_err(|_| bad("value"))?,
                branch_id: fields[2].to_string(),
                label: fields[3].to_string(),
            });
            axis = format!("{} {}", fields[5], fields[4]);
        }
        plot_branches(output, &rows, "parameter", &axis)
    } else if header.starts_with("rho,scenario1") {
        let mut table = ScenarioTable {
            rhos: Vec::new(),
            counts: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(parse_err(format!("row {} has {} fields", i + 2, fields.len())));
            }
            let bad = |what: &str| parse_err(format!("row {}: bad {what}", i + 2));
            table.rhos.push(fields[0].parse().map_err(|_| bad("rho"))?);
            let mut counts = [0usize; 5];
            for (slot, field) in counts.iter_mut().zip(&fields[1..]) {
                *slot = field.parse().map_err(|_| bad("count"))?;
            }
            table.counts.push(counts);
        }
        plot_ensemble(output, &table)
    } else {
        Err(parse_err(
            "unrecognised header; expected a branch dataset or an ensemble table".into(),
        ))
    }
}
