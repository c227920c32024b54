//! Readout training: regression-data assembly and the ridge solve
//! `W_out = Y X^T (X X^T + beta I)^{-1}`, for a single attractor or for
//! parameter-aware training over several biased segments.

use nalgebra::DMatrix;

use crate::config::RCConfig;
use crate::numerics::{solve_ridge, Trajectory};
use crate::reservoir::{open_loop_drive, q_stack, Network, Readout, SegmentMeta};
use crate::systems::{generate_training_signal, SourceSystem, TrainingSignal};
use crate::{Error, Result};

/// Column range of one training segment inside the assembled matrices.
#[derive(Clone, Debug)]
pub struct SegmentColumns {
    pub meta: SegmentMeta,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

/// Assembled regression matrices: `x` stacks `q(r[i])` columnwise (2N x T),
/// `y` holds the matching drive samples (D x T).
#[derive(Clone, Debug)]
pub struct RegressionData {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub segments: Vec<SegmentColumns>,
}

/// Builds the regression matrices from open-loop drives. Columns are taken
/// at samples `i = t_listen/tau ... t_train/tau` inclusive, concatenated
/// across drives in the given order.
pub fn assemble_regression(
    drives: &[(&Trajectory, &TrainingSignal, f64)],
    cfg: &RCConfig,
) -> Result<RegressionData> {
    if drives.is_empty() {
        return Err(Error::Config("no training segments supplied".into()));
    }
    let l = cfg.listen_index();
    let t = cfg.train_index();
    let per_drive = t - l + 1;
    let n = drives[0].0.dim;
    for (idx, (states, signal, _)) in drives.iter().enumerate() {
        if states.len() <= t || signal.trajectory.len() <= t {
            return Err(Error::InsufficientData(format!(
                "drive {idx} too short: {} reservoir / {} signal samples, need {}",
                states.len(),
                signal.trajectory.len(),
                t + 1
            )));
        }
        if states.dim != n {
            return Err(Error::Shape(format!(
                "drive {idx} has reservoir dimension {}, expected {n}",
                states.dim
            )));
        }
        if signal.trajectory.dim != cfg.dim {
            return Err(Error::Shape(format!(
                "drive {idx} signal dimension {} does not match config dim {}",
                signal.trajectory.dim, cfg.dim
            )));
        }
    }
    let total = per_drive * drives.len();
    let mut x = DMatrix::zeros(2 * n, total);
    let mut y = DMatrix::zeros(cfg.dim, total);
    let mut segments = Vec::with_capacity(drives.len());
    for (idx, (states, signal, bias)) in drives.iter().enumerate() {
        let start = idx * per_drive;
        for (col, i) in (l..=t).enumerate() {
            let q = q_stack(states.sample(i));
            let u = signal.trajectory.sample(i);
            for (row, v) in q.iter().enumerate() {
                x[(row, start + col)] = *v;
            }
            for (row, v) in u.iter().enumerate() {
                y[(row, start + col)] = *v;
            }
        }
        segments.push(SegmentColumns {
            meta: SegmentMeta {
                system: signal.system.tag(),
                bias: *bias,
            },
            start,
            end: start + per_drive,
        });
    }
    Ok(RegressionData { x, y, segments })
}

/// Solves the ridge regression for the assembled data.
pub fn train_readout(data: &RegressionData, beta: f64) -> Result<Readout> {
    let w_out = solve_ridge(&data.x, &data.y, beta)?;
    Ok(Readout {
        w_out,
        segments: data.segments.iter().map(|s| s.meta.clone()).collect(),
    })
}

/// Per-component RMS of the training residual `Y - W_out X`.
pub fn residual_rms(w_out: &DMatrix<f64>, data: &RegressionData) -> Vec<f64> {
    let pred = w_out * &data.x;
    let t = data.x.ncols() as f64;
    (0..data.y.nrows())
        .map(|d| {
            let ss: f64 = (0..data.y.ncols())
                .map(|j| {
                    let e = data.y[(d, j)] - pred[(d, j)];
                    e * e
                })
                .sum();
            (ss / t).sqrt()
        })
        .collect()
}

/// The regularised objective the ridge solve minimises.
pub fn ridge_objective(w: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>, beta: f64) -> f64 {
    let resid = y - w * x;
    resid.iter().map(|v| v * v).sum::<f64>() + beta * w.iter().map(|v| v * v).sum::<f64>()
}

/// Output of a training run: the readout plus one warm-start state
/// (the reservoir state at `t_train`) per segment.
pub struct Trained {
    pub readout: Readout,
    pub warm_starts: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Trains a readout on one source system with zero node bias.
pub fn train_single(system: &SourceSystem, cfg: &RCConfig, net: &Network) -> Result<Trained> {
    train_parameter_aware(&[(system.clone(), 0.0)], cfg, net)
}

/// Trains one shared readout over several biased segments. Each entry
/// supplies its source system and the scalar node bias active during the
/// drive; warm-start states are returned in the same order.
pub fn train_parameter_aware(
    systems: &[(SourceSystem, f64)],
    cfg: &RCConfig,
    net: &Network,
) -> Result<Trained> {
    if systems.is_empty() {
        return Err(Error::Config("no training attractors supplied".into()));
    }
    let mut signals = Vec::with_capacity(systems.len());
    for (system, _) in systems {
        signals.push(generate_training_signal(system, cfg.tau, cfg.t_train)?);
    }
    let mut states = Vec::with_capacity(systems.len());
    for (signal, (_, bias)) in signals.iter().zip(systems) {
        states.push(open_loop_drive(net, &signal.trajectory, cfg, *bias)?);
    }
    let t = cfg.train_index();
    let warm_starts: Vec<Vec<f64>> = states.iter().map(|s| s.sample(t).to_vec()).collect();
    let drives: Vec<(&Trajectory, &TrainingSignal, f64)> = states
        .iter()
        .zip(signals.iter())
        .zip(systems.iter())
        .map(|((st, sig), (_, bias))| (st, sig, *bias))
        .collect();
    let data = assemble_regression(&drives, cfg)?;
    let readout = train_readout(&data, cfg.beta)?;
    let residuals = residual_rms(&readout.w_out, &data);
    Ok(Trained {
        readout,
        warm_starts,
        residuals,
    })
}
