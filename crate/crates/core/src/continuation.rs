//! Warm-started parameter continuation.
//!
//! A sweep walks a parameter grid, at each step running the closed loop
//! from the previous step's final state: a settle stretch that is
//! discarded, then a measured stretch that is classified and signed. A
//! branch is declared lost when the measured extrema jump away from the
//! previous step's by more than the jump tolerance and the jump survives
//! one retry with doubled settle time; tracking then continues under a new
//! branch id, since the bounded dynamics must have reached some other
//! attractor. Also here: basin sampling over random reservoir states and
//! the scenario ensemble over (matrix, spectral radius) grids.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classification::{
    assign_scenario, classify_output, cluster_1d, dedup_attractors, detect_c1, AttractorRecord,
    BasinRecord, C1Class, ClassifierParams, ExtremaSignature, PeriodCount, ReferenceFit, Scenario,
};
use crate::config::{ic_seed, network_seed, RCConfig};
use crate::numerics::{local_extrema, ExtremumKind, Trajectory};
use crate::reservoir::{closed_loop_run, random_reservoir_state, Network, RawNetwork, Readout};
use crate::systems::SourceSystem;
use crate::training::train_single;
use crate::{Error, Result};

/// Which scalar the sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Bias,
    Rho,
}

/// Grid and per-step budgets of one continuation sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPlan {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    /// Signed step; its sign must point from start toward stop.
    pub step: f64,
    /// Discarded transient per step, model units.
    pub t_settle: f64,
    /// Measured window per step, model units.
    pub t_measure: f64,
    /// Largest tolerated per-step excursion of measured extrema.
    pub jump_tol: f64,
    /// Observed coordinate whose extrema the sweep records.
    pub coordinate: usize,
    pub kind: ExtremumKind,
}

impl SweepPlan {
    pub fn bias_sweep(start: f64, stop: f64, coordinate: usize, kind: ExtremumKind) -> SweepPlan {
        let dir = if stop >= start { 1.0 } else { -1.0 };
        SweepPlan {
            parameter: SweepParameter::Bias,
            start,
            stop,
            step: dir * 0.002,
            t_settle: 70.0,
            t_measure: 130.0,
            jump_tol: 0.5,
            coordinate,
            kind,
        }
    }

    pub fn rho_sweep(start: f64, stop: f64) -> SweepPlan {
        let dir = if stop >= start { 1.0 } else { -1.0 };
        SweepPlan {
            parameter: SweepParameter::Rho,
            start,
            stop,
            step: dir * 0.005,
            t_settle: 70.0,
            t_measure: 130.0,
            jump_tol: 0.5,
            coordinate: 2,
            kind: ExtremumKind::Maxima,
        }
    }

    pub fn validate(&self, t_predict_budget: f64) -> Result<()> {
        if !(self.step.is_finite() && self.step != 0.0) {
            return Err(Error::Config("sweep step must be finite and nonzero".into()));
        }
        if (self.stop - self.start) * self.step < -1e-12 {
            return Err(Error::Config(format!(
                "sweep step {} points away from stop (start {}, stop {})",
                self.step, self.start, self.stop
            )));
        }
        if self.t_settle < 0.0 || self.t_measure <= 0.0 {
            return Err(Error::Config("sweep time budgets must be positive".into()));
        }
        if self.t_settle + self.t_measure > t_predict_budget + 1e-9 {
            return Err(Error::Config(format!(
                "per-step budget {} exceeds the prediction budget {}",
                self.t_settle + self.t_measure,
                t_predict_budget
            )));
        }
        Ok(())
    }

    /// The swept parameter values, from start through stop inclusive.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor().max(0.0) as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

/// One measured sweep step.
#[derive(Clone, Debug)]
pub struct BranchPoint {
    pub param: f64,
    pub c1: C1Class,
    /// Cluster count of the measured coordinate's extrema, when periodic.
    pub period: PeriodCount,
    pub signature: ExtremaSignature,
    /// Values emitted to the bifurcation dataset: the fixed-point level,
    /// the per-cycle cluster centers, or all extrema when aperiodic.
    pub emit_values: Vec<f64>,
    /// Internal state at the end of the measured stretch.
    pub state: Vec<f64>,
}

impl BranchPoint {
    /// Compact per-point label for datasets.
    pub fn label(&self) -> String {
        match (&self.c1, &self.period) {
            (C1Class::FixedPoint, _) => "fixed_point".into(),
            (_, PeriodCount::Periodic(n)) => format!("period{n}"),
            (C1Class::LimitCycle { cycle }, _) => format!("limit_cycle({cycle})"),
            _ => "aperiodic".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BranchStatus {
    Alive,
    Lost { param: f64 },
}

/// A tracked attractor family over a contiguous parameter range.
#[derive(Clone, Debug)]
pub struct Branch {
    pub branch_id: String,
    pub points: Vec<BranchPoint>,
    pub status: BranchStatus,
}

impl Branch {
    pub fn first_param(&self) -> Option<f64> {
        self.points.first().map(|p| p.param)
    }

    pub fn last_param(&self) -> Option<f64> {
        self.points.last().map(|p| p.param)
    }
}

/// The dynamics a sweep runs: anything that can integrate its closed loop
/// at a given parameter value from a given internal state.
pub trait SweepModel {
    /// Dimension of the observed output.
    fn dim(&self) -> usize;
    fn tau(&self) -> f64;
    /// Integrates for `duration` at the swept parameter set to `param`,
    /// returning the observed trajectory and the final internal state.
    fn run(&mut self, param: f64, state: &[f64], duration: f64) -> Result<(Trajectory, Vec<f64>)>;
}

/// Bias sweep of a fixed trained reservoir: the parameter is the scalar
/// node bias of the closed loop.
pub struct BiasSweep<'a> {
    pub net: &'a Network,
    pub readout: &'a Readout,
    pub cfg: &'a RCConfig,
}

impl SweepModel for BiasSweep<'_> {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn tau(&self) -> f64 {
        self.cfg.tau
    }

    fn run(&mut self, param: f64, state: &[f64], duration: f64) -> Result<(Trajectory, Vec<f64>)> {
        let steps = (duration / self.cfg.tau).round() as usize;
        let out = closed_loop_run(self.net, self.readout, self.cfg, param, state, steps, false)?;
        Ok((out.observed, out.final_state))
    }
}

/// Spectral-radius sweep: each step rescales the same raw matrix to the new
/// radius and retrains the readout before running the closed loop.
pub struct RhoSweep<'a> {
    raw: &'a RawNetwork,
    system: SourceSystem,
    cfg: RCConfig,
    cache: Option<(f64, Network, Readout)>,
}

impl<'a> RhoSweep<'a> {
    pub fn new(raw: &'a RawNetwork, system: SourceSystem, cfg: RCConfig) -> Self {
        RhoSweep {
            raw,
            system,
            cfg,
            cache: None,
        }
    }
}

impl SweepModel for RhoSweep<'_> {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn tau(&self) -> f64 {
        self.cfg.tau
    }

    fn run(&mut self, param: f64, state: &[f64], duration: f64) -> Result<(Trajectory, Vec<f64>)> {
        let stale = match &self.cache {
            Some((rho, _, _)) => *rho != param,
            None => true,
        };
        if stale {
            let net = self.raw.at_rho(param)?;
            self.cfg.rho = param;
            let trained = train_single(&self.system, &self.cfg, &net)?;
            self.cache = Some((param, net, trained.readout));
        }
        let (_, net, readout) = self.cache.as_ref().unwrap();
        let steps = (duration / self.cfg.tau).round() as usize;
        let out = closed_loop_run(net, readout, &self.cfg, self.cfg.bias, state, steps, false)?;
        Ok((out.observed, out.final_state))
    }
}

struct StepMeasure {
    c1: C1Class,
    period: PeriodCount,
    signature: ExtremaSignature,
    step_values: Vec<f64>,
    emit_values: Vec<f64>,
}

fn measure_window(
    obs: &Trajectory,
    plan: &SweepPlan,
    params: &ClassifierParams,
) -> Result<StepMeasure> {
    let c1 = detect_c1(obs, params)?;
    let signature = ExtremaSignature::from_window(obs, plan.coordinate, plan.kind, &c1, params);
    let series = obs.coordinate(plan.coordinate);
    if matches!(c1, C1Class::FixedPoint) {
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        return Ok(StepMeasure {
            c1,
            period: PeriodCount::Periodic(1),
            signature,
            step_values: vec![mean],
            emit_values: vec![mean],
        });
    }
    let extrema = local_extrema(&series, plan.kind);
    let mut step_values = extrema.values.clone();
    step_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let period = match crate::classification::count_period(obs, plan.coordinate, plan.kind, params)
    {
        Ok(p) => p,
        Err(_) => PeriodCount::Aperiodic,
    };
    let emit_values = match period {
        PeriodCount::Periodic(_) => cluster_1d(&step_values, params.eps_cluster)
            .into_iter()
            .map(|c| c.center)
            .collect(),
        PeriodCount::Aperiodic => step_values.clone(),
    };
    Ok(StepMeasure {
        c1,
        period,
        signature,
        step_values,
        emit_values,
    })
}

/// Largest distance from the new step's measured values to the previous
/// step's; a set appearing or vanishing counts as an infinite jump.
fn jump_distance(new: &[f64], old: &[f64]) -> f64 {
    if new.is_empty() && old.is_empty() {
        return 0.0;
    }
    if new.is_empty() || old.is_empty() {
        return f64::INFINITY;
    }
    crate::classification::directed_hausdorff(new, old)
}

/// Walks the plan's grid from `seed_state`, warm-starting every step from
/// the previous one. Returns the seeded branch first, followed by any
/// successor branches opened after a loss. Branch ids are
/// `{family}.{index}`.
pub fn sweep_branch(
    model: &mut dyn SweepModel,
    plan: &SweepPlan,
    seed_state: &[f64],
    family: &str,
    params: &ClassifierParams,
) -> Result<Vec<Branch>> {
    let mut branches = Vec::new();
    let mut index = 0usize;
    let mut current = Branch {
        branch_id: format!("{family}.{index}"),
        points: Vec::new(),
        status: BranchStatus::Alive,
    };
    let mut state = seed_state.to_vec();
    let mut prev: Option<Vec<f64>> = None;
    for param in plan.grid() {
        let (_, settled) = model.run(param, &state, plan.t_settle)?;
        let (observed, mut end_state) = model.run(param, &settled, plan.t_measure)?;
        let mut meas = measure_window(&observed, plan, params)?;
        if let Some(prev_values) = &prev {
            if jump_distance(&meas.step_values, prev_values) > plan.jump_tol {
                let (_, resettled) = model.run(param, &end_state, 2.0 * plan.t_settle)?;
                let (observed2, end2) = model.run(param, &resettled, plan.t_measure)?;
                let meas2 = measure_window(&observed2, plan, params)?;
                end_state = end2;
                if jump_distance(&meas2.step_values, prev_values) > plan.jump_tol {
                    log::info!(
                        "branch {} lost at {param}: extrema jumped beyond {}",
                        current.branch_id,
                        plan.jump_tol
                    );
                    current.status = BranchStatus::Lost { param };
                    branches.push(current);
                    index += 1;
                    current = Branch {
                        branch_id: format!("{family}.{index}"),
                        points: Vec::new(),
                        status: BranchStatus::Alive,
                    };
                }
                meas = meas2;
            }
        }
        current.points.push(BranchPoint {
            param,
            c1: meas.c1,
            period: meas.period,
            signature: meas.signature,
            emit_values: meas.emit_values,
            state: end_state.clone(),
        });
        prev = Some(meas.step_values);
        state = end_state;
    }
    branches.push(current);
    Ok(branches)
}

/// Runs the closed loop from `n_ic` random reservoir states and classifies
/// each post-transient window. Signatures are built on the given
/// coordinate and extremum kind; labels are attached when a reference fit
/// is supplied. IC `j` draws its state from the seed schedule applied to
/// `ic_seed_base`.
pub fn basin_sample(
    net: &Network,
    readout: &Readout,
    bias: f64,
    cfg: &RCConfig,
    reference: Option<&ReferenceFit>,
    params: &ClassifierParams,
    coordinate: usize,
    kind: ExtremumKind,
    n_ic: usize,
    ic_seed_base: u64,
) -> Result<Vec<BasinRecord>> {
    let mut records = Vec::with_capacity(n_ic);
    for j in 0..n_ic {
        let r0 = random_reservoir_state(net.n, ic_seed(ic_seed_base, j));
        let out = closed_loop_run(net, readout, cfg, bias, &r0, cfg.predict_steps(), false)?;
        let window = out.observed.window_from(cfg.trans_offset());
        let c1 = detect_c1(&window, params)?;
        let signature = ExtremaSignature::from_window(&window, coordinate, kind, &c1, params);
        let (label, max_c3_distance) = match reference {
            Some(fit) => {
                let outcome = classify_output(&window, fit, params)?;
                (Some(outcome.label), outcome.max_c3_distance)
            }
            None => (None, None),
        };
        records.push(BasinRecord {
            ic_index: j,
            c1,
            signature,
            label,
            max_c3_distance,
            final_state: out.final_state,
        });
    }
    Ok(records)
}

/// One (matrix, radius) cell of the ensemble.
#[derive(Clone, Debug)]
pub struct EnsembleCell {
    pub matrix_id: usize,
    pub rho: f64,
    pub scenario: Scenario,
    pub records: Vec<BasinRecord>,
    pub attractors: Vec<AttractorRecord>,
}

/// Scenario frequencies per radius; `counts[r][s]` is the number of
/// matrices assigned scenario `s + 1` at `rhos[r]`.
#[derive(Clone, Debug)]
pub struct ScenarioTable {
    pub rhos: Vec<f64>,
    pub counts: Vec<[usize; 5]>,
}

/// A cell that could not be evaluated, with the offending error.
#[derive(Clone, Debug)]
pub struct FailedCell {
    pub matrix_id: usize,
    pub rho: f64,
    pub message: String,
}

pub struct EnsembleOutput {
    pub table: ScenarioTable,
    pub cells: Vec<EnsembleCell>,
    pub failures: Vec<FailedCell>,
}

/// Trains and basin-samples every (matrix, radius) cell of the grid.
/// Matrix `i` redraws only the recurrent matrix (seed `base_seed + i`);
/// the input matrix is sampled once from `base_seed` and shared, and each
/// matrix's raw sample is rescaled to every radius rather than redrawn.
#[allow(clippy::too_many_arguments)]
pub fn scenario_ensemble(
    base_cfg: &RCConfig,
    system: &SourceSystem,
    rhos: &[f64],
    n_matrices: usize,
    n_ic: usize,
    base_seed: u64,
    reference: &ReferenceFit,
    params: &ClassifierParams,
) -> Result<EnsembleOutput> {
    if rhos.is_empty() || n_matrices == 0 || n_ic == 0 {
        return Err(Error::Config(
            "ensemble needs at least one radius, one matrix, and one initial condition".into(),
        ));
    }
    let per_matrix: Vec<(Vec<EnsembleCell>, Vec<FailedCell>)> = (0..n_matrices)
        .into_par_iter()
        .map(|i| {
            let mut cells = Vec::new();
            let mut failures = Vec::new();
            let seed = network_seed(base_seed, i);
            let raw = match RawNetwork::sample(
                base_cfg.n,
                base_cfg.dim,
                base_cfg.connect_p,
                seed,
                base_seed,
            ) {
                Ok(raw) => raw,
                Err(e) => {
                    for &rho in rhos {
                        failures.push(FailedCell {
                            matrix_id: i,
                            rho,
                            message: e.to_string(),
                        });
                    }
                    return (cells, failures);
                }
            };
            for &rho in rhos {
                match ensemble_cell(
                    base_cfg, system, &raw, i, rho, n_ic, base_seed, reference, params,
                ) {
                    Ok(cell) => cells.push(cell),
                    Err(e) => {
                        log::warn!("ensemble cell (matrix {i}, rho {rho}) failed: {e}");
                        failures.push(FailedCell {
                            matrix_id: i,
                            rho,
                            message: e.to_string(),
                        });
                    }
                }
            }
            (cells, failures)
        })
        .collect();
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (mut c, mut f) in per_matrix {
        cells.append(&mut c);
        failures.append(&mut f);
    }
    let mut counts = vec![[0usize; 5]; rhos.len()];
    for cell in &cells {
        let r = rhos
            .iter()
            .position(|&rho| rho == cell.rho)
            .expect("cell rho comes from the grid");
        counts[r][(cell.scenario.0 - 1) as usize] += 1;
    }
    Ok(EnsembleOutput {
        table: ScenarioTable {
            rhos: rhos.to_vec(),
            counts,
        },
        cells,
        failures,
    })
}

#[allow(clippy::too_many_arguments)]
fn ensemble_cell(
    base_cfg: &RCConfig,
    system: &SourceSystem,
    raw: &RawNetwork,
    matrix_id: usize,
    rho: f64,
    n_ic: usize,
    base_seed: u64,
    reference: &ReferenceFit,
    params: &ClassifierParams,
) -> Result<EnsembleCell> {
    let net = raw.at_rho(rho)?;
    let mut cfg = base_cfg.clone();
    cfg.rho = rho;
    cfg.seeds.network = raw.network_seed;
    cfg.seeds.input = raw.input_seed;
    let trained = train_single(system, &cfg, &net)?;
    let records = basin_sample(
        &net,
        &trained.readout,
        0.0,
        &cfg,
        Some(reference),
        params,
        params.c1_coordinate,
        ExtremumKind::Maxima,
        n_ic,
        base_seed,
    )?;
    let attractors = dedup_attractors(records.clone(), params);
    let scenario = assign_scenario(&attractors)?;
    Ok(EnsembleCell {
        matrix_id,
        rho,
        scenario,
        records,
        attractors,
    })
}

/// A record is a confirmed untrained attractor at `param` when no point of
/// any branch seeded from a reconstructed attractor matches its signature
/// within half a grid step of `param`.
pub fn confirm_ua(
    signature: &ExtremaSignature,
    reconstructed_branches: &[Branch],
    param: f64,
    step: f64,
    match_tol: f64,
) -> bool {
    !reconstructed_branches.iter().any(|branch| {
        branch.points.iter().any(|point| {
            (point.param - param).abs() <= step.abs() * 0.5
                && point.signature.matches(signature, match_tol)
        })
    })
}

/// One row of the bifurcation dataset.
#[derive(Clone, Debug)]
pub struct BifurcationRow {
    pub param: f64,
    pub value: f64,
    pub branch_id: String,
    pub label: String,
}

/// Flattens branches into scatter rows: one row per emitted extremum value
/// per step.
pub fn emit_bifurcation_data(branches: &[Branch]) -> Vec<BifurcationRow> {
    let mut rows = Vec::new();
    for branch in branches {
        for point in &branch.points {
            let label = point.label();
            for &value in &point.emit_values {
                rows.push(BifurcationRow {
                    param: point.param,
                    value,
                    branch_id: branch.branch_id.clone(),
                    label: label.clone(),
                });
            }
        }
    }
    rows
}

/// Writes `param,value,branch_id,label,kind,coord` rows.
pub fn write_branch_csv(
    path: &Path,
    rows: &[BifurcationRow],
    kind: ExtremumKind,
    coordinate: usize,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "param,value,branch_id,label,kind,coord")?;
    for row in rows {
        writeln!(
            w,
            "{:.6},{:.6},{},{},{},x{}",
            row.param,
            row.value,
            row.branch_id,
            row.label,
            kind.tag(),
            coordinate + 1
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the `rho,scenario1..scenario5` frequency table.
pub fn write_ensemble_csv(path: &Path, table: &ScenarioTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "rho,scenario1,scenario2,scenario3,scenario4,scenario5")?;
    for (rho, counts) in table.rhos.iter().zip(&table.counts) {
        writeln!(
            w,
            "{:.6},{},{},{},{},{}",
            rho, counts[0], counts[1], counts[2], counts[3], counts[4]
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-cell `matrix_id,rho,scenario` map.
pub fn write_matrix_map_csv(path: &Path, cells: &[EnsembleCell]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "matrix_id,rho,scenario")?;
    for cell in cells {
        writeln!(w, "{},{:.6},{}", cell.matrix_id, cell.rho, cell.scenario)?;
    }
    w.flush()?;
    Ok(())
}
