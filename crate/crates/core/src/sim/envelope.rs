use serde::{Deserialize, Serialize};

use super::EnsembleStats;
use crate::design::BoundConstants;

/// Fraction of the recorded times, counted from the end, that estimates the
/// long-run level of `E|x − z*|²`.
pub const TAIL_FRACTION: f64 = 0.25;

/// Tolerance of the comparisons, in standard errors.
const SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeViolation {
    pub time: f64,
    pub value: f64,
    pub stderr: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// Upper bound `a·(|x₀ − z*|² + |u*|²)e^{−λt} + b‖g(z*)‖²` per recorded time.
    pub upper: Vec<f64>,
    pub upper_violations: Vec<EnvelopeViolation>,
    /// Same, using the certificate-derived constants when available.
    pub certificate_upper: Option<Vec<f64>>,
    pub certificate_violations: Vec<EnvelopeViolation>,
    /// Average of `E|x − z*|²` over the tail window.
    pub tail_mean: f64,
    pub tail_stderr: f64,
    /// `c₃‖g(z*)‖²`.
    pub lower_bound: f64,
    pub lower_ok: bool,
}

impl EnvelopeReport {
    pub fn upper_ok(&self) -> bool {
        self.upper_violations.is_empty()
    }

    pub fn certificate_ok(&self) -> bool {
        self.certificate_violations.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.upper_ok() && self.certificate_ok() && self.lower_ok
    }
}

fn check(stats: &EnsembleStats, envelope: &[f64], violations: &mut Vec<EnvelopeViolation>) {
    for (i, &bound) in envelope.iter().enumerate() {
        let value = stats.mean_sq_state_dev[i];
        let stderr = stats.mean_sq_state_dev_se[i];
        if value - SIGMAS * stderr > bound {
            violations.push(EnvelopeViolation {
                time: stats.times[i],
                value,
                stderr,
                bound,
            });
        }
    }
}

/// Compares the simulated `E|x − z*|²` with the explicit bounds.
///
/// `initial_dev = |x(0) − z*|`, `u_star_norm = |u*|` and
/// `noise_norm = ‖g(z*)‖_HS`. A point counts as a violation only when it
/// exceeds the bound by more than three standard errors. The lower bound is
/// checked against the tail average, whose standard error is taken as the
/// mean per-time standard error over the window.
pub fn bound_envelope(
    stats: &EnsembleStats,
    bc: &BoundConstants,
    initial_dev: f64,
    u_star_norm: f64,
    noise_norm: f64,
) -> EnvelopeReport {
    let start = initial_dev * initial_dev + u_star_norm * u_star_norm;
    let floor = noise_norm * noise_norm;
    let upper: Vec<f64> = stats
        .times
        .iter()
        .map(|t| bc.thm3_coeff_exp * start * (-bc.lambda * t).exp() + bc.thm3_coeff_ss * floor)
        .collect();
    let mut upper_violations = Vec::new();
    check(stats, &upper, &mut upper_violations);

    let certificate_upper = bc.prop1.map(|p| {
        stats
            .times
            .iter()
            .map(|t| p.c1 * start * (-p.rate * t).exp() + p.c2 * floor)
            .collect::<Vec<_>>()
    });
    let mut certificate_violations = Vec::new();
    if let Some(env) = &certificate_upper {
        check(stats, env, &mut certificate_violations);
    }

    let len = stats.times.len();
    let window = ((len as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, len.max(1));
    let tail = len - window;
    let tail_mean = stats.mean_sq_state_dev[tail..].iter().sum::<f64>() / window as f64;
    let tail_stderr = stats.mean_sq_state_dev_se[tail..].iter().sum::<f64>() / window as f64;
    let lower_bound = bc.c3 * floor;
    EnvelopeReport {
        upper,
        upper_violations,
        certificate_upper,
        certificate_violations,
        tail_mean,
        tail_stderr,
        lower_bound,
        lower_ok: tail_mean + SIGMAS * tail_stderr >= lower_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(values: Vec<f64>, se: f64) -> EnsembleStats {
        let len = values.len();
        EnsembleStats {
            paths: 100,
            dt: 1.0,
            times: (0..len).map(|i| i as f64).collect(),
            mean_sq_error: values.clone(),
            mean_sq_error_se: vec![se; len],
            mean_sq_state_dev: values,
            mean_sq_state_dev_se: vec![se; len],
            mean_error: vec![vec![0.0]; len],
            mean_u: vec![vec![0.0]; len],
            mean_sq_u: vec![0.0; len],
            var_u: vec![0.0; len],
            var_u_se: vec![0.0; len],
        }
    }

    fn constants() -> BoundConstants {
        BoundConstants {
            thm3_coeff_exp: 2.0,
            thm3_coeff_ss: 4.0,
            lambda: 1.0,
            c3: 0.1,
            prop1: None,
        }
    }

    #[test]
    fn envelope_values() {
        let r = bound_envelope(&stats(vec![0.0; 4], 0.0), &constants(), 1.0, 0.0, 0.5);
        assert!((r.upper[0] - 3.0).abs() < 1e-15);
        assert!((r.upper[2] - (2.0 * (-2.0f64).exp() + 1.0)).abs() < 1e-15);
        assert!((r.lower_bound - 0.025).abs() < 1e-15);
        assert!(r.upper_ok());
        assert!(!r.lower_ok);
    }

    #[test]
    fn violations_respect_standard_error() {
        let bc = constants();
        let r = bound_envelope(&stats(vec![3.5, 0.5, 1.0, 1.0], 0.1), &bc, 1.0, 0.0, 0.5);
        assert_eq!(r.upper_violations.len(), 1);
        assert_eq!(r.upper_violations[0].time, 0.0);
        let r = bound_envelope(&stats(vec![3.2, 0.5, 1.0, 1.0], 0.1), &bc, 1.0, 0.0, 0.5);
        assert!(r.upper_ok());
        assert!(r.lower_ok);
        assert_eq!(r.tail_mean, 1.0);
    }
}
