//! Reservoir network construction and integration.
//!
//! The recurrent matrix `M` is sampled Erdos-Renyi style (each entry nonzero
//! with probability `connect_p`, values uniform in (-1, 1)) and rescaled to a
//! target spectral radius. `W_in` holds exactly one nonzero per row. The
//! open-loop integrator drives the reservoir with a recorded signal under a
//! zero-order hold; the closed-loop integrator feeds the readout back as
//! input.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RCConfig;
use crate::numerics::{spectral_radius, Trajectory};
use crate::{Error, Result};

const MAX_REBUILD_ATTEMPTS: u64 = 16;

/// Reservoir connectivity: the rescaled recurrent matrix plus the input map.
#[derive(Clone, Debug)]
pub struct Network {
    pub n: usize,
    pub dim: usize,
    pub connect_p: f64,
    pub rho_target: f64,
    /// Spectral radius recomputed after rescaling.
    pub rho_actual: f64,
    pub network_seed: u64,
    pub input_seed: u64,
    /// Number of resamples needed to obtain a nonzero spectral radius.
    pub rebuild_attempts: u64,
    pub m: DMatrix<f64>,
    pub w_in: DMatrix<f64>,
    csr: Csr,
}

/// A sampled network before rescaling; one raw sample serves every target
/// radius so that ensembles vary `rho` without redrawing `M`.
#[derive(Clone, Debug)]
pub struct RawNetwork {
    pub n: usize,
    pub dim: usize,
    pub connect_p: f64,
    pub rho_raw: f64,
    pub network_seed: u64,
    pub input_seed: u64,
    pub rebuild_attempts: u64,
    pub m_raw: DMatrix<f64>,
    pub w_in: DMatrix<f64>,
}

fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = rng.random_range(-1.0..1.0);
        if v != -1.0 {
            return v;
        }
    }
}

impl RawNetwork {
    /// Samples `M` and `W_in` from the two seeded streams. A sample whose
    /// spectral radius vanishes (so it cannot be rescaled) is redrawn from a
    /// shifted sub-seed, up to a small attempt bound.
    pub fn sample(
        n: usize,
        dim: usize,
        connect_p: f64,
        network_seed: u64,
        input_seed: u64,
    ) -> Result<RawNetwork> {
        if n == 0 || dim == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if !(connect_p > 0.0 && connect_p <= 1.0) {
            return Err(Error::Config(format!(
                "connect_p must lie in (0, 1], got {connect_p}"
            )));
        }
        let mut w_rng = ChaCha8Rng::seed_from_u64(input_seed);
        let mut w_in = DMatrix::zeros(n, dim);
        for i in 0..n {
            let col = w_rng.random_range(0..dim);
            w_in[(i, col)] = uniform_open(&mut w_rng);
        }
        for attempt in 0..MAX_REBUILD_ATTEMPTS {
            let seed = network_seed.wrapping_add(attempt << 48);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = DMatrix::zeros(n, n);
            let mut nonzeros = 0usize;
            for i in 0..n {
                for j in 0..n {
                    if rng.random::<f64>() < connect_p {
                        m[(i, j)] = uniform_open(&mut rng);
                        nonzeros += 1;
                    }
                }
            }
            let rho_raw = if nonzeros == 0 { 0.0 } else { spectral_radius(&m) };
            if rho_raw > 0.0 {
                return Ok(RawNetwork {
                    n,
                    dim,
                    connect_p,
                    rho_raw,
                    network_seed,
                    input_seed,
                    rebuild_attempts: attempt,
                    m_raw: m,
                    w_in,
                });
            }
            log::warn!(
                "network seed {network_seed} attempt {attempt} sampled spectral radius 0; redrawing"
            );
        }
        Err(Error::Numeric(format!(
            "network seed {network_seed} kept sampling zero spectral radius"
        )))
    }

    /// Rescales the raw sample to the target radius.
    pub fn at_rho(&self, rho_target: f64) -> Result<Network> {
        if !(rho_target.is_finite() && rho_target >= 0.0) {
            return Err(Error::Config(format!(
                "rho must be finite and >= 0, got {rho_target}"
            )));
        }
        let (m, rho_actual) = if rho_target == 0.0 {
            (DMatrix::zeros(self.n, self.n), 0.0)
        } else {
            let m = &self.m_raw * (rho_target / self.rho_raw);
            let rho_actual = spectral_radius(&m);
            (m, rho_actual)
        };
        let csr = Csr::from_dense(&m);
        Ok(Network {
            n: self.n,
            dim: self.dim,
            connect_p: self.connect_p,
            rho_target,
            rho_actual,
            network_seed: self.network_seed,
            input_seed: self.input_seed,
            rebuild_attempts: self.rebuild_attempts,
            m,
            w_in: self.w_in.clone(),
            csr,
        })
    }
}

impl Network {
    /// Samples and rescales a network from the seeds in `config`.
    pub fn build(config: &RCConfig) -> Result<Network> {
        let raw = RawNetwork::sample(
            config.n,
            config.dim,
            config.connect_p,
            config.seeds.network,
            config.seeds.input,
        )?;
        raw.at_rho(config.rho)
    }

    /// Writes the network as structured text that reloads bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "rcbasin network v1")?;
        writeln!(w, "n = {}", self.n)?;
        writeln!(w, "dim = {}", self.dim)?;
        writeln!(w, "connect_p = {}", self.connect_p)?;
        writeln!(w, "rho_target = {}", self.rho_target)?;
        writeln!(w, "rho_actual = {}", self.rho_actual)?;
        writeln!(w, "network_seed = {}", self.network_seed)?;
        writeln!(w, "input_seed = {}", self.input_seed)?;
        writeln!(w, "rebuild_attempts = {}", self.rebuild_attempts)?;
        writeln!(w, "[m]")?;
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.m[(i, j)];
                if v != 0.0 {
                    writeln!(w, "{i} {j} {v}")?;
                }
            }
        }
        writeln!(w, "[w_in]")?;
        for i in 0..self.n {
            for j in 0..self.dim {
                let v = self.w_in[(i, j)];
                if v != 0.0 {
                    writeln!(w, "{i} {j} {v}")?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reloads a network written by [`Network::save`].
    pub fn load(path: &Path) -> Result<Network> {
        let bad = |message: String| Error::Parse {
            path: path.display().to_string(),
            message,
        };
        let reader = BufReader::new(crate::open_input(path)?);
        let mut lines = reader.lines();
        match lines.next() {
            Some(Ok(line)) if line.trim() == "rcbasin network v1" => {}
            _ => return Err(bad("missing network header".into())),
        }
        let mut fields = std::collections::BTreeMap::new();
        let mut section = String::new();
        let mut m_entries: Vec<(usize, usize, f64)> = Vec::new();
        let mut w_entries: Vec<(usize, usize, f64)> = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                section = line.to_string();
                continue;
            }
            if section.is_empty() {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| bad(format!("expected key = value, got {line}")))?;
                fields.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                let mut it = line.split_whitespace();
                let parse3 = |it: &mut dyn Iterator<Item = &str>| -> Option<(usize, usize, f64)> {
                    Some((
                        it.next()?.parse().ok()?,
                        it.next()?.parse().ok()?,
                        it.next()?.parse().ok()?,
                    ))
                };
                let entry =
                    parse3(&mut it).ok_or_else(|| bad(format!("bad matrix entry: {line}")))?;
                match section.as_str() {
                    "[m]" => m_entries.push(entry),
                    "[w_in]" => w_entries.push(entry),
                    other => return Err(bad(format!("unknown section {other}"))),
                }
            }
        }
        let field = |name: &str| -> Result<&String> {
            fields
                .get(name)
                .ok_or_else(|| bad(format!("missing field {name}")))
        };
        let parse_num = |name: &str| -> Result<f64> {
            field(name)?
                .parse()
                .map_err(|_| bad(format!("bad numeric field {name}")))
        };
        let n = parse_num("n")? as usize;
        let dim = parse_num("dim")? as usize;
        let mut m = DMatrix::zeros(n, n);
        for (i, j, v) in m_entries {
            if i >= n || j >= n {
                return Err(bad(format!("m entry ({i}, {j}) out of bounds")));
            }
            m[(i, j)] = v;
        }
        let mut w_in = DMatrix::zeros(n, dim);
        for (i, j, v) in w_entries {
            if i >= n || j >= dim {
                return Err(bad(format!("w_in entry ({i}, {j}) out of bounds")));
            }
            w_in[(i, j)] = v;
        }
        let csr = Csr::from_dense(&m);
        Ok(Network {
            n,
            dim,
            connect_p: parse_num("connect_p")?,
            rho_target: parse_num("rho_target")?,
            rho_actual: parse_num("rho_actual")?,
            network_seed: field("network_seed")?
                .parse()
                .map_err(|_| bad("bad network_seed".into()))?,
            input_seed: field("input_seed")?
                .parse()
                .map_err(|_| bad("bad input_seed".into()))?,
            rebuild_attempts: field("rebuild_attempts")?
                .parse()
                .map_err(|_| bad("bad rebuild_attempts".into()))?,
            m,
            w_in,
            csr,
        })
    }
}

/// Compressed sparse rows for the recurrent matvec in the stepping kernels.
#[derive(Clone, Debug)]
struct Csr {
    row_ptr: Vec<u32>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl Csr {
    fn from_dense(m: &DMatrix<f64>) -> Csr {
        let n = m.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != 0.0 {
                    col.push(j as u32);
                    val.push(v);
                }
            }
            row_ptr.push(col.len() as u32);
        }
        Csr { row_ptr, col, val }
    }

    #[inline]
    fn mul_add_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            let lo = self.row_ptr[i] as usize;
            let hi = self.row_ptr[i + 1] as usize;
            let mut s = 0.0;
            for k in lo..hi {
                s += self.val[k] * x[self.col[k] as usize];
            }
            out[i] += s;
        }
    }
}

/// Stacks a reservoir state with its componentwise square: `q(r) = (r; r^2)`.
pub fn q_stack(r: &[f64]) -> Vec<f64> {
    let mut q = Vec::with_capacity(2 * r.len());
    q.extend_from_slice(r);
    q.extend(r.iter().map(|v| v * v));
    q
}

/// Applies a readout matrix (`dim x 2N`) to a reservoir state.
pub fn readout_map(w_out: &DMatrix<f64>, r: &[f64]) -> Vec<f64> {
    assert_eq!(w_out.ncols(), 2 * r.len(), "readout width must be 2N");
    let q = DVector::from_vec(q_stack(r));
    (w_out * q).iter().copied().collect()
}

/// Trained readout: `u_hat = W_out q(r)` plus the training provenance.
#[derive(Clone, Debug)]
pub struct Readout {
    /// `dim x 2N`.
    pub w_out: DMatrix<f64>,
    pub segments: Vec<SegmentMeta>,
}

/// Identifies one training segment of a readout.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentMeta {
    /// System tag as produced by `SourceSystem::tag`.
    pub system: String,
    /// Scalar node bias active while this segment was recorded.
    pub bias: f64,
}

impl Readout {
    pub fn n_nodes(&self) -> usize {
        self.w_out.ncols() / 2
    }

    pub fn dim(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_out.ncols() % 2 != 0 {
            return Err(Error::Shape("readout width must be even".into()));
        }
        if self.w_out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("readout contains non-finite weights".into()));
        }
        Ok(())
    }

    /// Writes the readout as structured text that reloads bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "rcbasin readout v1")?;
        writeln!(w, "dim = {}", self.dim())?;
        writeln!(w, "n = {}", self.n_nodes())?;
        writeln!(w, "segments = {}", self.segments.len())?;
        for seg in &self.segments {
            writeln!(w, "segment = {} {}", seg.system, seg.bias)?;
        }
        writeln!(w, "[w_out]")?;
        for r in 0..self.w_out.nrows() {
            let row: Vec<String> = (0..self.w_out.ncols())
                .map(|c| format!("{}", self.w_out[(r, c)]))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reloads a readout written by [`Readout::save`].
    pub fn load(path: &Path) -> Result<Readout> {
        let bad = |message: String| Error::Parse {
            path: path.display().to_string(),
            message,
        };
        let reader = BufReader::new(crate::open_input(path)?);
        let mut lines = reader.lines();
        match lines.next() {
            Some(Ok(line)) if line.trim() == "rcbasin readout v1" => {}
            _ => return Err(bad("missing readout header".into())),
        }
        let mut dim = None;
        let mut n = None;
        let mut segments = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut in_matrix = false;
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line == "[w_out]" {
                in_matrix = true;
                continue;
            }
            if in_matrix {
                let row: std::result::Result<Vec<f64>, _> =
                    line.split_whitespace().map(str::parse).collect();
                rows.push(row.map_err(|_| bad(format!("bad matrix row: {line}")))?);
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {line}")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "dim" => dim = Some(v.parse().map_err(|_| bad("bad dim".into()))?),
                "n" => n = Some(v.parse().map_err(|_| bad("bad n".into()))?),
                "segments" => {}
                "segment" => {
                    let (tag, bias) = v
                        .rsplit_once(' ')
                        .ok_or_else(|| bad(format!("bad segment line: {v}")))?;
                    segments.push(SegmentMeta {
                        system: tag.trim().to_string(),
                        bias: bias.trim().parse().map_err(|_| bad("bad segment bias".into()))?,
                    });
                }
                other => return Err(bad(format!("unknown field {other}"))),
            }
        }
        let dim: usize = dim.ok_or_else(|| bad("missing dim".into()))?;
        let n: usize = n.ok_or_else(|| bad("missing n".into()))?;
        if rows.len() != dim || rows.iter().any(|r| r.len() != 2 * n) {
            return Err(bad(format!(
                "matrix must be {dim} x {}, got {} rows",
                2 * n,
                rows.len()
            )));
        }
        let w_out = DMatrix::from_fn(dim, 2 * n, |r, c| rows[r][c]);
        let readout = Readout { w_out, segments };
        readout.validate()?;
        Ok(readout)
    }
}

/// Closed-loop right-hand side
/// `dr/dt = gamma * (-r + tanh(M r + sigma W_in W_out q(r) + bias))`,
/// with flattened weights and reusable scratch space.
pub struct ClosedLoopField<'a> {
    csr: &'a Csr,
    w_in: Vec<f64>,
    w_out: Vec<f64>,
    n: usize,
    dim: usize,
    sigma: f64,
    gamma: f64,
    bias: f64,
    u: Vec<f64>,
    arg: Vec<f64>,
}

impl<'a> ClosedLoopField<'a> {
    pub fn new(net: &'a Network, readout: &Readout, sigma: f64, gamma: f64, bias: f64) -> Self {
        assert_eq!(readout.n_nodes(), net.n, "readout width must match network");
        assert_eq!(readout.dim(), net.dim, "readout rows must match input dim");
        let w_in = flatten_row_major(&net.w_in);
        let w_out = flatten_row_major(&readout.w_out);
        ClosedLoopField {
            csr: &net.csr,
            w_in,
            w_out,
            n: net.n,
            dim: net.dim,
            sigma,
            gamma,
            bias,
            u: vec![0.0; net.dim],
            arg: vec![0.0; net.n],
        }
    }

    /// Readout projection of a state: `W_out q(r)`.
    pub fn observe(&self, r: &[f64], out: &mut [f64]) {
        let w = 2 * self.n;
        for d in 0..self.dim {
            let row = &self.w_out[d * w..(d + 1) * w];
            let mut s = 0.0;
            for j in 0..self.n {
                s += row[j] * r[j] + row[self.n + j] * r[j] * r[j];
            }
            out[d] = s;
        }
    }

    /// Samples the feedback `W_out q(r)` that stays held for the next step.
    /// The loop freezes its own output across each RK4 step, mirroring the
    /// zero-order hold the open-loop drive applied to the training signal;
    /// evaluating the readout anew at every stage would hand the loop an
    /// input half a step fresher than anything the readout was fitted to.
    pub fn hold_input_from(&mut self, r: &[f64]) {
        let w = 2 * self.n;
        for d in 0..self.dim {
            let row = &self.w_out[d * w..(d + 1) * w];
            let mut s = 0.0;
            for j in 0..self.n {
                s += row[j] * r[j] + row[self.n + j] * r[j] * r[j];
            }
            self.u[d] = s;
        }
    }

    /// Field evaluation with the held feedback as the drive.
    pub fn eval(&mut self, r: &[f64], dr: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.w_in[i * self.dim..(i + 1) * self.dim];
            let mut s = 0.0;
            for d in 0..self.dim {
                s += row[d] * self.u[d];
            }
            self.arg[i] = self.sigma * s + self.bias;
        }
        self.csr.mul_add_into(r, &mut self.arg);
        for i in 0..self.n {
            dr[i] = self.gamma * (self.arg[i].tanh() - r[i]);
        }
    }
}

fn flatten_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

struct ReservoirStepper {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    xs: Vec<f64>,
}

impl ReservoirStepper {
    fn new(n: usize) -> Self {
        ReservoirStepper {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            xs: vec![0.0; n],
        }
    }

    fn step<F: FnMut(&[f64], &mut [f64])>(&mut self, mut f: F, r: &mut [f64], tau: f64) {
        let n = r.len();
        let half = 0.5 * tau;
        f(r, &mut self.k1);
        for i in 0..n {
            self.xs[i] = r[i] + half * self.k1[i];
        }
        f(&self.xs, &mut self.k2);
        for i in 0..n {
            self.xs[i] = r[i] + half * self.k2[i];
        }
        f(&self.xs, &mut self.k3);
        for i in 0..n {
            self.xs[i] = r[i] + tau * self.k3[i];
        }
        f(&self.xs, &mut self.k4);
        let sixth = tau / 6.0;
        for i in 0..n {
            r[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Drives the reservoir from `r(0) = 0` with the recorded signal held
/// constant across each step, recording the state at every sample up to
/// `t_train`. The returned trajectory has `t_train / tau + 1` samples.
/// `bias` is the scalar node bias for this drive (nonzero only in
/// parameter-aware training).
pub fn open_loop_drive(
    net: &Network,
    signal: &Trajectory,
    cfg: &RCConfig,
    bias: f64,
) -> Result<Trajectory> {
    if signal.dim != net.dim {
        return Err(Error::Shape(format!(
            "signal dim {} does not match network input dim {}",
            signal.dim, net.dim
        )));
    }
    if (signal.tau - cfg.tau).abs() > 1e-12 * cfg.tau.max(1.0) {
        return Err(Error::Shape(format!(
            "signal step {} does not match configured tau {}",
            signal.tau, cfg.tau
        )));
    }
    let n_steps = cfg.train_index();
    if signal.len() < n_steps {
        return Err(Error::InsufficientData(format!(
            "signal holds {} samples, training needs {}",
            signal.len(),
            n_steps
        )));
    }
    let n = net.n;
    let w_in = flatten_row_major(&net.w_in);
    let mut v = vec![0.0; n];
    let mut arg = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut stepper = ReservoirStepper::new(n);
    let mut traj = Trajectory::with_capacity(n, cfg.tau, 0.0, n_steps + 1);
    traj.push_sample(&r);
    for i in 0..n_steps {
        let u = signal.sample(i);
        for row in 0..n {
            let wr = &w_in[row * net.dim..(row + 1) * net.dim];
            let mut s = 0.0;
            for d in 0..net.dim {
                s += wr[d] * u[d];
            }
            v[row] = cfg.sigma * s + bias;
        }
        stepper.step(
            |y: &[f64], dy: &mut [f64]| {
                arg.copy_from_slice(&v);
                net.csr.mul_add_into(y, &mut arg);
                for j in 0..n {
                    dy[j] = cfg.gamma * (arg[j].tanh() - y[j]);
                }
            },
            &mut r,
            cfg.tau,
        );
        traj.push_sample(&r);
    }
    Ok(traj)
}

/// Result of a closed-loop run: the readout projection at every sample, the
/// final reservoir state, and optionally the full state trajectory.
pub struct ClosedLoopOutput {
    pub observed: Trajectory,
    pub final_state: Vec<f64>,
    pub states: Option<Trajectory>,
}

/// Runs the autonomous closed loop for `n_steps` from `r0`, with the node
/// bias overridden by `bias`. Sample times are relative to the loop start.
pub fn closed_loop_run(
    net: &Network,
    readout: &Readout,
    cfg: &RCConfig,
    bias: f64,
    r0: &[f64],
    n_steps: usize,
    keep_states: bool,
) -> Result<ClosedLoopOutput> {
    if r0.len() != net.n {
        return Err(Error::Shape(format!(
            "initial state has {} components, network has {}",
            r0.len(),
            net.n
        )));
    }
    readout.validate()?;
    let mut field = ClosedLoopField::new(net, readout, cfg.sigma, cfg.gamma, bias);
    let mut stepper = ReservoirStepper::new(net.n);
    let mut r = r0.to_vec();
    let mut obs = vec![0.0; net.dim];
    let mut observed = Trajectory::with_capacity(net.dim, cfg.tau, 0.0, n_steps + 1);
    let mut states = keep_states.then(|| Trajectory::with_capacity(net.n, cfg.tau, 0.0, n_steps + 1));
    field.observe(&r, &mut obs);
    observed.push_sample(&obs);
    if let Some(s) = states.as_mut() {
        s.push_sample(&r);
    }
    for step in 0..n_steps {
        field.hold_input_from(&r);
        stepper.step(|y: &[f64], dy: &mut [f64]| field.eval(y, dy), &mut r, cfg.tau);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "closed loop produced a non-finite state at step {step}"
            )));
        }
        field.observe(&r, &mut obs);
        observed.push_sample(&obs);
        if let Some(s) = states.as_mut() {
            s.push_sample(&r);
        }
    }
    Ok(ClosedLoopOutput {
        observed,
        final_state: r,
        states,
    })
}

/// Draws a reservoir state uniformly from `[-1, 1]^N`.
pub fn random_reservoir_state(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Seeds;

    fn small_config() -> RCConfig {
        let mut cfg = RCConfig::lorenz_defaults();
        cfg.n = 40;
        cfg.seeds = Seeds::new(5, 6, 7);
        cfg
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = small_config();
        let a = Network::build(&cfg).unwrap();
        let b = Network::build(&cfg).unwrap();
        assert_eq!(a.m, b.m);
        assert_eq!(a.w_in, b.w_in);
        assert_eq!(a.rho_actual, b.rho_actual);
    }

    #[test]
    fn zero_rho_gives_zero_matrix() {
        let mut cfg = small_config();
        cfg.rho = 0.0;
        let net = Network::build(&cfg).unwrap();
        assert!(net.m.iter().all(|&v| v == 0.0));
        assert_eq!(net.rho_actual, 0.0);
    }

    #[test]
    fn rescaled_radius_matches_target() {
        let mut cfg = small_config();
        cfg.n = 80;
        for rho in [0.15, 0.5, 1.2] {
            cfg.rho = rho;
            let net = Network::build(&cfg).unwrap();
            assert!(
                (net.rho_actual - rho).abs() < 1e-6,
                "radius {} vs target {rho}",
                net.rho_actual
            );
        }
    }

    #[test]
    fn nonzero_count_tracks_connection_probability() {
        let mut cfg = small_config();
        cfg.n = 100;
        let net = Network::build(&cfg).unwrap();
        let nnz = net.m.iter().filter(|&&v| v != 0.0).count() as f64;
        let mean = 100.0 * 100.0 * cfg.connect_p;
        let sd = (mean * (1.0 - cfg.connect_p)).sqrt();
        assert!(
            (nnz - mean).abs() < 4.0 * sd,
            "nnz {nnz} too far from expected {mean}"
        );
    }

    #[test]
    fn input_matrix_has_one_entry_per_row() {
        let net = Network::build(&small_config()).unwrap();
        for i in 0..net.n {
            let nz: Vec<f64> = (0..net.dim)
                .map(|j| net.w_in[(i, j)])
                .filter(|&v| v != 0.0)
                .collect();
            assert_eq!(nz.len(), 1, "row {i}");
            assert!(nz[0].abs() < 1.0);
        }
    }

    #[test]
    fn q_stack_appends_squares() {
        assert_eq!(q_stack(&[2.0, -1.0]), vec![2.0, -1.0, 4.0, 1.0]);
    }

    #[test]
    fn readout_map_agrees_with_split_form() {
        let net = Network::build(&small_config()).unwrap();
        let n = net.n;
        let w = DMatrix::from_fn(3, 2 * n, |r, c| ((r * 31 + c * 7) % 13) as f64 / 13.0 - 0.4);
        let r: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let full = readout_map(&w, &r);
        // Split form: W = [A | B], u = A r + B r^2.
        for d in 0..3 {
            let mut s = 0.0;
            for j in 0..n {
                s += w[(d, j)] * r[j] + w[(d, n + j)] * r[j] * r[j];
            }
            assert!((full[d] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn open_loop_stays_at_origin_without_input() {
        let cfg = small_config();
        let net = Network::build(&cfg).unwrap();
        let mut zeros = Trajectory::new(3, cfg.tau, 0.0);
        for _ in 0..=cfg.train_index() {
            zeros.push_sample(&[0.0, 0.0, 0.0]);
        }
        let traj = open_loop_drive(&net, &zeros, &cfg, 0.0).unwrap();
        assert!(traj.samples().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn open_loop_states_stay_in_unit_box() {
        let cfg = small_config();
        let net = Network::build(&cfg).unwrap();
        let signal =
            crate::systems::generate_training_signal(&crate::systems::SourceSystem::Lorenz, cfg.tau, cfg.t_train)
                .unwrap();
        let traj = open_loop_drive(&net, &signal.trajectory, &cfg, 0.0).unwrap();
        let start = (5.0 / cfg.gamma / cfg.tau).ceil() as usize;
        for i in start..traj.len() {
            for v in traj.sample(i) {
                assert!(v.abs() <= 1.0 + 1e-9, "component {v} left the unit box");
            }
        }
    }

    #[test]
    fn closed_loop_with_zero_readout_decays_exponentially() {
        let mut cfg = small_config();
        cfg.rho = 0.0;
        let net = Network::build(&cfg).unwrap();
        let readout = Readout {
            w_out: DMatrix::zeros(3, 2 * net.n),
            segments: vec![],
        };
        let r0 = vec![0.5; net.n];
        let out = closed_loop_run(&net, &readout, &cfg, 0.0, &r0, 1000, true).unwrap();
        let states = out.states.unwrap();
        // With M = 0 and zero feedback the field is dr/dt = -gamma r, which the
        // integrator contracts by the quartic Taylor factor of exp(-gamma tau)
        // each step.
        let z = -cfg.gamma * cfg.tau;
        let factor = 1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
        for i in [100usize, 1000] {
            let want = 0.5 * factor.powi(i as i32);
            for v in states.sample(i) {
                assert!(
                    (v - want).abs() < 1e-9 * want.abs() + 1e-30,
                    "step {i}: state {v} vs predicted {want}"
                );
            }
        }
    }

    #[test]
    fn closed_loop_states_enter_unit_box() {
        let cfg = small_config();
        let net = Network::build(&cfg).unwrap();
        // Deliberately corrupted readout with huge weights.
        let w = DMatrix::from_fn(3, 2 * net.n, |r, c| ((r + c) as f64).sin() * 1e3);
        let readout = Readout {
            w_out: w,
            segments: vec![],
        };
        let r0 = random_reservoir_state(net.n, 123);
        let out = closed_loop_run(&net, &readout, &cfg, 0.3, &r0, 2000, true).unwrap();
        let states = out.states.unwrap();
        let start = (5.0 / cfg.gamma / cfg.tau).ceil() as usize;
        for i in start..states.len() {
            for v in states.sample(i) {
                assert!(v.abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn closed_loop_observation_matches_readout_map() {
        let cfg = small_config();
        let net = Network::build(&cfg).unwrap();
        let w = DMatrix::from_fn(3, 2 * net.n, |r, c| ((r * 17 + c) % 7) as f64 * 0.05 - 0.1);
        let readout = Readout {
            w_out: w.clone(),
            segments: vec![],
        };
        let r0 = random_reservoir_state(net.n, 9);
        let out = closed_loop_run(&net, &readout, &cfg, 0.0, &r0, 50, true).unwrap();
        let states = out.states.unwrap();
        for i in [0, 25, 50] {
            let via_map = readout_map(&w, states.sample(i));
            for (a, b) in out.observed.sample(i).iter().zip(via_map) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn closed_loop_is_bitwise_deterministic() {
        let cfg = small_config();
        let net = Network::build(&cfg).unwrap();
        let w = DMatrix::from_fn(3, 2 * net.n, |r, c| ((r + 2 * c) % 11) as f64 * 0.02);
        let readout = Readout {
            w_out: w,
            segments: vec![],
        };
        let r0 = random_reservoir_state(net.n, 77);
        let a = closed_loop_run(&net, &readout, &cfg, 0.1, &r0, 500, false).unwrap();
        let b = closed_loop_run(&net, &readout, &cfg, 0.1, &r0, 500, false).unwrap();
        assert_eq!(a.final_state, b.final_state);
        for i in 0..a.observed.len() {
            assert_eq!(a.observed.sample(i), b.observed.sample(i));
        }
    }

    #[test]
    fn network_file_round_trips_bit_exactly() {
        let net = Network::build(&small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.txt");
        net.save(&path).unwrap();
        let back = Network::load(&path).unwrap();
        assert_eq!(net.m, back.m);
        assert_eq!(net.w_in, back.w_in);
        assert_eq!(net.rho_actual.to_bits(), back.rho_actual.to_bits());
        assert_eq!(net.network_seed, back.network_seed);
        assert_eq!(net.rebuild_attempts, back.rebuild_attempts);
    }

    #[test]
    fn readout_file_round_trips_bit_exactly() {
        let w = DMatrix::from_fn(3, 20, |r, c| ((r * 13 + c * 5) % 17) as f64 / 1.7 - 2.0);
        let readout = Readout {
            w_out: w,
            segments: vec![
                SegmentMeta {
                    system: "sprott(a=17)".into(),
                    bias: 0.4,
                },
                SegmentMeta {
                    system: "sprott(a=27)".into(),
                    bias: -0.4,
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("readout.txt");
        readout.save(&path).unwrap();
        let back = Readout::load(&path).unwrap();
        assert_eq!(readout.w_out, back.w_out);
        assert_eq!(readout.segments, back.segments);
    }

    #[test]
    fn corrupt_network_file_reports_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.txt");
        std::fs::write(&path, "not a network\n").unwrap();
        assert!(matches!(Network::load(&path), Err(Error::Parse { .. })));
    }
}
