//! Continuous-time reservoir computing for attractor reconstruction.
//!
//! The crate trains leaky tanh reservoirs on chaotic source systems, runs
//! them in closed loop, classifies the resulting outputs (reconstruction
//! quality or untrained attractor), and tracks attractor branches under
//! parameter continuation to produce bifurcation-diagram data.
//!
//! Modules are layered: [`numerics`] holds the shared kernels (RK4, spectral
//! rescaling, ridge regression, extrema extraction), [`systems`] the source
//! vector fields, [`reservoir`] the network construction and integrators,
//! [`training`] the readout regression, [`classification`] the output
//! classifier, [`continuation`] the sweep and ensemble drivers, and
//! [`harness`] the batch task entry points used by the CLI.

pub mod classification;
pub mod config;
pub mod continuation;
pub mod harness;
pub mod numerics;
pub mod plot;
pub mod reservoir;
pub mod systems;
pub mod training;

pub use classification::{
    C1Class, ClassLabel, ClassifierParams, ClassificationOutcome, ExtremaSignature, LabelValue,
    ReferenceFit, Scenario,
};
pub use config::{RCConfig, Seeds};
pub use continuation::{Branch, BranchPoint, BranchStatus, SweepParameter, SweepPlan};
pub use harness::{
    resolve_spec, run_task1, run_task2, run_task3, CliOverrides, GapOutcome, RunManifest,
    SweepScope, TaskKind, TaskSpec,
};
pub use numerics::{ExtremumKind, Trajectory};
pub use reservoir::{Network, Readout, SegmentMeta};
pub use systems::{SourceSystem, TrainingSignal};

/// Crate-wide error type. CLI exit codes map `Config`/`Parse` to 2 and the
/// numerical failures to 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("trajectory diverged at step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },

    #[error("cannot rescale a matrix of spectral radius zero to a nonzero radius")]
    InvalidRescale,

    #[error("ridge system is singular; use a regularisation beta > 0")]
    SingularRidge,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Opens a user-supplied input file, naming the path on failure. Unreadable
/// inputs are configuration errors; bare `Io` is kept for output writing.
pub(crate) fn open_input(path: &std::path::Path) -> Result<std::fs::File> {
    std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn read_input(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}
