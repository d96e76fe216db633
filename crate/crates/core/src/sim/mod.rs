//! Euler-Maruyama Monte Carlo for the closed loop, with moment estimation,
//! bound-envelope checks and a few diagnostics used when reasoning about the
//! stability proofs numerically.

mod controller;
mod diagnostics;
mod engine;
mod envelope;

pub use controller::{controller_pd, controller_pid, Controller};
pub use diagnostics::{dissipativity_probe, generator_eval, z_drift, ProbeReport};
pub use engine::{
    em_step, simulate_paths, trajectory, ClosedLoopState, EnsembleStats, SimConfig, Trajectory,
    DIVERGENCE_THRESHOLD,
};
pub use envelope::{bound_envelope, EnvelopeReport, EnvelopeViolation, TAIL_FRACTION};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("path {path} diverged at t = {time}")]
    Diverged { path: u64, time: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} entries for {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}
