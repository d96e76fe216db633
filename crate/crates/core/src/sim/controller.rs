use serde::{Deserialize, Serialize};

use crate::design::{GainKind, GainVector};

/// Feedback law driving the simulated plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Controller {
    /// Extended PID `u = k₁e + k₀∫e + k₂ė + … + k_n e^{(n−1)}`.
    Pid { gains: GainVector },
    /// Extended PD `u = k₁e + k₂ė + … + k_n e^{(n−1)}`.
    Pd { gains: GainVector },
    /// Constant input.
    OpenLoop { input: Vec<f64> },
}

impl Controller {
    pub fn pid(gains: GainVector) -> Self {
        assert_eq!(gains.kind(), GainKind::Pid);
        Controller::Pid { gains }
    }

    pub fn pd(gains: GainVector) -> Self {
        assert_eq!(gains.kind(), GainKind::Pd);
        Controller::Pd { gains }
    }

    pub fn from_gains(gains: GainVector) -> Self {
        match gains.kind() {
            GainKind::Pid => Controller::Pid { gains },
            GainKind::Pd => Controller::Pd { gains },
        }
    }

    pub fn gains(&self) -> Option<&GainVector> {
        match self {
            Controller::Pid { gains } | Controller::Pd { gains } => Some(gains),
            Controller::OpenLoop { .. } => None,
        }
    }

    /// Control input for state `x` (`n·d` entries) and error integral.
    pub fn evaluate(&self, x: &[f64], integral: &[f64], y_star: &[f64], out: &mut [f64]) {
        match self {
            Controller::Pid { gains } => pid_into(x, integral, gains, y_star, out),
            Controller::Pd { gains } => pd_into(x, gains, y_star, out),
            Controller::OpenLoop { input } => out.copy_from_slice(input),
        }
    }
}

/// Derivative feedback shared by PID and PD: `k₁e − Σ_{i≥2} k_i x_i`, using
/// `e^{(i)} = −x_{i+1}` so no numerical differentiation is involved.
fn proportional_derivative(x: &[f64], g: &GainVector, y_star: &[f64], out: &mut [f64]) {
    let d = y_star.len();
    let n = g.n();
    debug_assert_eq!(x.len(), n * d);
    for c in 0..d {
        let mut u = g.k(1) * (y_star[c] - x[c]);
        for i in 2..=n {
            u -= g.k(i) * x[(i - 1) * d + c];
        }
        out[c] = u;
    }
}

fn pid_into(x: &[f64], integral: &[f64], g: &GainVector, y_star: &[f64], out: &mut [f64]) {
    proportional_derivative(x, g, y_star, out);
    let k0 = g.k(0);
    for (u, s) in out.iter_mut().zip(integral) {
        *u += k0 * s;
    }
}

fn pd_into(x: &[f64], g: &GainVector, y_star: &[f64], out: &mut [f64]) {
    proportional_derivative(x, g, y_star, out);
}

/// Extended PID output for a raw state and accumulated error `∫(y* − x₁)`.
pub fn controller_pid(x: &[f64], integral: &[f64], g: &GainVector, y_star: &[f64]) -> Vec<f64> {
    assert_eq!(g.kind(), GainKind::Pid);
    let mut out = vec![0.0; y_star.len()];
    pid_into(x, integral, g, y_star, &mut out);
    out
}

/// Extended PD output for a raw state.
pub fn controller_pd(x: &[f64], g: &GainVector, y_star: &[f64]) -> Vec<f64> {
    assert_eq!(g.kind(), GainKind::Pd);
    let mut out = vec![0.0; y_star.len()];
    pd_into(x, g, y_star, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::sec6_pattern;

    #[test]
    fn zero_error_gives_zero_input() {
        let g = sec6_pattern(8.6).unwrap();
        assert_eq!(
            controller_pid(&[1.0, 0.0, 0.0], &[0.0], &g, &[1.0]),
            vec![0.0]
        );
        let pd = GainVector::pd([3.0, 4.0]).unwrap();
        assert_eq!(controller_pd(&[2.0, 0.0], &pd, &[2.0]), vec![0.0]);
    }

    #[test]
    fn proportional_term_only() {
        let g = sec6_pattern(8.6).unwrap();
        assert_eq!(
            controller_pid(&[0.0, 0.0, 0.0], &[0.0], &g, &[1.0]),
            vec![21.5]
        );
    }

    #[test]
    fn pd_with_rate_term() {
        // e = 2, ė = −x₂ = −1.
        let pd = GainVector::pd([3.0, 4.0]).unwrap();
        assert_eq!(controller_pd(&[-1.0, 1.0], &pd, &[1.0]), vec![2.0]);
    }

    #[test]
    fn vector_output_acts_componentwise() {
        let g = GainVector::pid([2.0, 3.0, 5.0]).unwrap();
        // d = 2, n = 2: x = (x₁ ∈ ℝ², x₂ ∈ ℝ²)
        let u = controller_pid(&[1.0, -1.0, 0.5, 0.25], &[0.1, 0.2], &g, &[0.0, 1.0]);
        assert_eq!(
            u,
            vec![
                -3.0 + 2.0 * 0.1 - 5.0 * 0.5,
                3.0 * 2.0 + 2.0 * 0.2 - 5.0 * 0.25
            ]
        );
    }
}
