//! Extended PID control of nonlinear uncertain stochastic systems.
//!
//! The plant is a chain of `n` integrators driven by a nonlinear, uncertain
//! and noisy last block,
//!
//! ```text
//! dx_i = x_{i+1} dt            (1 ≤ i < n)
//! dx_n = f(x; u) dt + g(x) dB
//! y    = x_1
//! ```
//!
//! and the controller is `u = k₁e + k₀∫e + k₂ė + … + k_n e^{(n−1)}` with
//! `e = y* − y`. The crate covers
//!
//! - [`model`]: plant description, equilibrium input and coordinate changes,
//! - [`design`]: admissibility of gains and constructive gain rules,
//! - [`lyapunov`]: explicit Lyapunov matrices and their verification,
//! - [`poly`]: Hurwitz tests for the closed-loop characteristic polynomial,
//! - [`sim`]: Euler-Maruyama Monte Carlo of the closed loop.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod design;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod poly;
pub mod rng;
pub mod sim;

pub use design::{
    bound_constants, check_gains, check_inequality, check_inequality_pd, geometric_gains,
    lambda_gains, sec6_pattern, BoundConstants, DesignError, DesignReport, GainKind, GainVector,
    LambdaDesign, LambdaOverrides,
};
pub use lyapunov::{verify_certificate, LyapunovCertificate, Rejection};
pub use model::{solve_equilibrium, Dims, Dynamics, ModelError, PlantSpec, Setpoint};
pub use poly::{is_hurwitz, HurwitzVerdict, PolyError};
pub use sim::{simulate_paths, Controller, EnsembleStats, SimConfig, SimError};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/plants.md")]
    mod plants {}
    #[doc = include_str!("../../../book/src/gain-design.md")]
    mod gain_design {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/hurwitz.md")]
    mod hurwitz {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
