//! Reservoir configuration and seed bookkeeping.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Seeds for the three independent random streams of one reservoir run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    /// Stream sampling the recurrent matrix `M`.
    pub network: u64,
    /// Stream sampling the input matrix `W_in`.
    pub input: u64,
    /// Base for closed-loop initial-condition draws.
    pub ic: u64,
}

impl Seeds {
    pub fn new(network: u64, input: u64, ic: u64) -> Self {
        Seeds { network, input, ic }
    }
}

/// Parameters of one continuous-time reservoir computer.
///
/// The reservoir obeys `dr/dt = gamma * (-r + tanh(M r + sigma W_in u + bias))`
/// with `M` rescaled to spectral radius `rho` and `W_in` holding one nonzero
/// entry per row. Times are model-time units; all integrators use the fixed
/// step `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RCConfig {
    /// Reservoir dimension N.
    pub n: usize,
    /// Observable dimension D (3 for the source systems here).
    pub dim: usize,
    /// Target spectral radius of the recurrent matrix.
    pub rho: f64,
    /// Input coupling strength.
    pub sigma: f64,
    /// Leak rate.
    pub gamma: f64,
    /// Ridge regularisation used when training the readout.
    pub beta: f64,
    /// Integration step.
    pub tau: f64,
    /// Connection probability for entries of `M`.
    pub connect_p: f64,
    /// End of the discarded listening stage.
    pub t_listen: f64,
    /// End of the training window (also the closed-loop start time).
    pub t_train: f64,
    /// End of the closed-loop prediction window.
    pub t_predict: f64,
    /// Start of the classification window; defaults to `t_train + 70`.
    pub t_trans: f64,
    /// Scalar bias applied uniformly to every reservoir node.
    pub bias: f64,
    pub seeds: Seeds,
}

impl RCConfig {
    /// Defaults for single-attractor Lorenz reconstruction.
    pub fn lorenz_defaults() -> Self {
        RCConfig {
            n: 100,
            dim: 3,
            rho: 0.5,
            sigma: 0.2,
            gamma: 10.0,
            beta: 0.001,
            tau: 0.01,
            connect_p: 0.05,
            t_listen: 100.0,
            t_train: 200.0,
            t_predict: 300.0,
            t_trans: 270.0,
            bias: 0.0,
            seeds: Seeds::new(1, 1, 1_000_000),
        }
    }

    /// Defaults for the two-cycle parameter-aware Sprott training.
    pub fn sprott_pair_defaults() -> Self {
        RCConfig {
            rho: 1.2,
            sigma: 1.6,
            beta: 0.01,
            t_listen: 100.0,
            t_train: 300.0,
            t_predict: 500.0,
            t_trans: 370.0,
            ..Self::lorenz_defaults()
        }
    }

    /// Defaults for the Lorenz/Halvorsen parameter-aware training.
    pub fn lorenz_halvorsen_defaults() -> Self {
        RCConfig {
            rho: 1.2,
            sigma: 0.2,
            beta: 0.1,
            ..Self::lorenz_defaults()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("sigma", self.sigma),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.n == 0 || self.dim == 0 {
            return Err(Error::Config("n and dim must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.connect_p > 0.0 && self.connect_p <= 1.0) {
            return Err(Error::Config(format!(
                "connect_p must lie in (0, 1], got {}",
                self.connect_p
            )));
        }
        if !(0.0 < self.t_listen && self.t_listen < self.t_train && self.t_train < self.t_predict)
        {
            return Err(Error::Config(format!(
                "time stages must satisfy 0 < t_listen < t_train < t_predict, got {} / {} / {}",
                self.t_listen, self.t_train, self.t_predict
            )));
        }
        if !(self.t_train <= self.t_trans && self.t_trans < self.t_predict) {
            return Err(Error::Config(format!(
                "t_trans must lie in [t_train, t_predict), got {}",
                self.t_trans
            )));
        }
        for (name, t) in [
            ("t_listen", self.t_listen),
            ("t_train", self.t_train),
            ("t_predict", self.t_predict),
            ("t_trans", self.t_trans),
        ] {
            let steps = t / self.tau;
            if (steps - steps.round()).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "{name} = {t} is not an integer multiple of tau = {}",
                    self.tau
                )));
            }
        }
        Ok(())
    }

    /// Sample index of `t_listen`.
    pub fn listen_index(&self) -> usize {
        (self.t_listen / self.tau).round() as usize
    }

    /// Sample index of `t_train`.
    pub fn train_index(&self) -> usize {
        (self.t_train / self.tau).round() as usize
    }

    /// Sample index of `t_predict`.
    pub fn predict_index(&self) -> usize {
        (self.t_predict / self.tau).round() as usize
    }

    /// Closed-loop sample count: steps from `t_train` to `t_predict`.
    pub fn predict_steps(&self) -> usize {
        self.predict_index() - self.train_index()
    }

    /// Offset of the classification window inside the closed-loop trajectory.
    pub fn trans_offset(&self) -> usize {
        ((self.t_trans - self.t_train) / self.tau).round() as usize
    }
}

/// Seed of the recurrent-matrix stream for ensemble member `i`.
pub fn network_seed(base_seed: u64, matrix_index: usize) -> u64 {
    base_seed.wrapping_add(matrix_index as u64)
}

/// Seed of the initial-condition stream for closed-loop start `j`.
pub fn ic_seed(base_seed: u64, ic_index: usize) -> u64 {
    base_seed
        .wrapping_mul(1_000_000)
        .wrapping_add(ic_index as u64)
}
