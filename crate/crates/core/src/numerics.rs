//! Shared numerical kernels: fixed-step RK4 integration, spectral radius and
//! rescaling of dense matrices, ridge regression via an SPD factorisation,
//! and local-extrema extraction with three-point parabolic refinement.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Any trajectory component beyond this magnitude aborts integration.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Trajectory sampled on the fixed grid `t0 + i * tau`, stored sample-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub tau: f64,
    pub t0: f64,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(dim: usize, tau: f64, t0: f64) -> Self {
        Trajectory {
            dim,
            tau,
            t0,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, tau: f64, t0: f64, samples: usize) -> Self {
        Trajectory {
            dim,
            tau,
            t0,
            data: Vec::with_capacity(dim * samples),
        }
    }

    pub fn push_sample(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.data.extend_from_slice(x);
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.tau
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// All values of one coordinate, in sample order.
    pub fn coordinate(&self, c: usize) -> Vec<f64> {
        assert!(c < self.dim, "coordinate {c} out of range for dim {}", self.dim);
        self.data.iter().skip(c).step_by(self.dim).copied().collect()
    }

    /// Tail of the trajectory starting at sample `start`, with adjusted origin.
    pub fn window_from(&self, start: usize) -> Trajectory {
        assert!(start < self.len(), "window start {start} past end {}", self.len());
        Trajectory {
            dim: self.dim,
            tau: self.tau,
            t0: self.time(start),
            data: self.data[start * self.dim..].to_vec(),
        }
    }
}

/// One classical RK4 step of the field `f` from state `x` at time `t`.
pub fn rk4_step<F>(f: &mut F, t: f64, x: &[f64], tau: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut ws = Rk4Scratch::new(x.len());
    let mut out = x.to_vec();
    rk4_step_into(f, t, x, tau, &mut out, &mut ws);
    out
}

pub(crate) struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    xs: Vec<f64>,
}

impl Rk4Scratch {
    pub(crate) fn new(dim: usize) -> Self {
        Rk4Scratch {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            xs: vec![0.0; dim],
        }
    }
}

pub(crate) fn rk4_step_into<F>(
    f: &mut F,
    t: f64,
    x: &[f64],
    tau: f64,
    out: &mut [f64],
    ws: &mut Rk4Scratch,
) where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    let half = 0.5 * tau;
    f(t, x, &mut ws.k1);
    for i in 0..n {
        ws.xs[i] = x[i] + half * ws.k1[i];
    }
    f(t + half, &ws.xs, &mut ws.k2);
    for i in 0..n {
        ws.xs[i] = x[i] + half * ws.k2[i];
    }
    f(t + half, &ws.xs, &mut ws.k3);
    for i in 0..n {
        ws.xs[i] = x[i] + tau * ws.k3[i];
    }
    f(t + tau, &ws.xs, &mut ws.k4);
    let sixth = tau / 6.0;
    for i in 0..n {
        out[i] = x[i] + sixth * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
}

/// Integrates `f` for `n_steps` RK4 steps from `x0`, recording every sample
/// including the initial state. Aborts with [`Error::Divergence`] when any
/// component leaves `[-DIVERGENCE_LIMIT, DIVERGENCE_LIMIT]` or turns non-finite.
pub fn integrate<F>(f: &mut F, x0: &[f64], t0: f64, tau: f64, n_steps: usize) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = x0.len();
    let mut traj = Trajectory::with_capacity(dim, tau, t0, n_steps + 1);
    let mut ws = Rk4Scratch::new(dim);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; dim];
    traj.push_sample(&x);
    for step in 0..n_steps {
        let t = t0 + step as f64 * tau;
        rk4_step_into(f, t, &x, tau, &mut next, &mut ws);
        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Divergence {
                step: step + 1,
                t: t + tau,
            });
        }
        x.copy_from_slice(&next);
        traj.push_sample(&x);
    }
    Ok(traj)
}

/// Largest eigenvalue modulus of a square matrix, via a dense complex
/// eigensolve.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Rescales `m` so its spectral radius equals `target`. A zero-radius matrix
/// cannot be rescaled to a nonzero target; a zero target returns the zero
/// matrix exactly.
pub fn rescale_to_radius(m: &DMatrix<f64>, target: f64) -> Result<DMatrix<f64>> {
    if !(target.is_finite() && target >= 0.0) {
        return Err(Error::Config(format!(
            "target spectral radius must be finite and >= 0, got {target}"
        )));
    }
    if target == 0.0 {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    let rho = spectral_radius(m);
    if rho == 0.0 {
        return Err(Error::InvalidRescale);
    }
    Ok(m * (target / rho))
}

/// Ridge regression `W = Y X^T (X X^T + beta I)^-1`, solved through a
/// Cholesky factorisation of the regularised Gram matrix.
///
/// `x` is `p x T`, `y` is `d x T`; the result is `d x p`. With `beta = 0`
/// a rank-deficient Gram matrix is reported as [`Error::SingularRidge`].
pub fn solve_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!(
            "ridge data columns disagree: x has {}, y has {}",
            x.ncols(),
            y.ncols()
        )));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Config(format!("beta must be finite and >= 0, got {beta}")));
    }
    let p = x.nrows();
    let mut gram = x * x.transpose();
    for i in 0..p {
        gram[(i, i)] += beta;
    }
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite Gram matrix in ridge solve".into()));
    }
    let chol = nalgebra::linalg::Cholesky::new(gram).ok_or(Error::SingularRidge)?;
    let rhs = x * y.transpose();
    Ok(chol.solve(&rhs).transpose())
}

/// Kind of local extremum to extract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Maxima,
    Minima,
}

impl ExtremumKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExtremumKind::Maxima => "max",
            ExtremumKind::Minima => "min",
        }
    }
}

/// Strict local extrema of a sampled series. `indices` are the sample indices
/// of the discrete extrema; `values` are refined through a parabola fitted to
/// the three surrounding samples; `companions` carries the value of a second
/// series at each extremum index (empty when no companion was requested).
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremaSeries {
    pub kind: ExtremumKind,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub companions: Vec<f64>,
}

impl ExtremaSeries {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Extracts strict local extrema of `series`.
pub fn local_extrema(series: &[f64], kind: ExtremumKind) -> ExtremaSeries {
    extrema_impl(series, None, kind)
}

/// Extracts strict local extrema of `series`, recording `companion` at each
/// extremum index.
pub fn local_extrema_with_companion(
    series: &[f64],
    companion: &[f64],
    kind: ExtremumKind,
) -> ExtremaSeries {
    assert_eq!(
        series.len(),
        companion.len(),
        "companion series length must match"
    );
    extrema_impl(series, Some(companion), kind)
}

fn extrema_impl(series: &[f64], companion: Option<&[f64]>, kind: ExtremumKind) -> ExtremaSeries {
    let mut out = ExtremaSeries {
        kind,
        indices: Vec::new(),
        values: Vec::new(),
        companions: Vec::new(),
    };
    if series.len() < 3 {
        return out;
    }
    for i in 1..series.len() - 1 {
        let (a, b, c) = (series[i - 1], series[i], series[i + 1]);
        let hit = match kind {
            ExtremumKind::Maxima => b > a && b > c,
            ExtremumKind::Minima => b < a && b < c,
        };
        if !hit {
            continue;
        }
        // Parabola through (-1, a), (0, b), (1, c); its vertex refines the
        // extremum value. The denominator is nonzero for a strict extremum.
        let denom = a + c - 2.0 * b;
        let refined = b - (a - c) * (a - c) / (8.0 * denom);
        out.indices.push(i);
        out.values.push(refined);
        if let Some(comp) = companion {
            out.companions.push(comp[i]);
        }
    }
    out
}
