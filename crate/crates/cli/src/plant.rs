//! Plant registry: the built-in third-order benchmark plant and scalar plants
//! given as expressions.

use std::collections::BTreeMap;
use std::sync::Arc;

use expid::model::FnDynamics;
use expid::{Dims, PlantSpec};
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::expr::{parse_expr, Expr};

/// `√3/2`, the Lipschitz constant of `a sin x₁ + b x₂ + c x₃` for
/// `|a|, |b|, |c| ≤ 1/2`.
pub const SEC6_LIPSCHITZ: f64 = 0.866_025_403_784_438_6;

pub const SEC6_PARAMS: [&str; 6] = ["a", "b", "c", "d", "mu", "sigma"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sec6Params {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Sec6Params {
    pub fn new(a: f64, b: f64, c: f64, d: f64, mu: f64, sigma: f64) -> Self {
        Self {
            a,
            b,
            c,
            d,
            mu,
            sigma,
        }
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn from_map(params: &BTreeMap<String, f64>, path: &str) -> Result<Self, ConfigError> {
        for key in params.keys() {
            if !SEC6_PARAMS.contains(&key.as_str()) {
                return Err(ConfigError::field(
                    format!("{path}.{key}"),
                    "unknown parameter of the sec6 plant",
                ));
            }
        }
        let get = |name: &str| {
            params
                .get(name)
                .copied()
                .ok_or_else(|| ConfigError::field(format!("{path}.{name}"), "missing"))
        };
        let p = Self::new(
            get("a")?,
            get("b")?,
            get("c")?,
            get("d")?,
            get("mu")?,
            get("sigma")?,
        );
        p.validate(path)?;
        Ok(p)
    }

    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if !(v.abs() <= 0.5) {
                return Err(ConfigError::field(
                    format!("{path}.{name}"),
                    format!("must satisfy |{name}| <= 1/2, got {v}"),
                ));
            }
        }
        if !self.d.is_finite() {
            return Err(ConfigError::field(format!("{path}.d"), "must be finite"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(ConfigError::field(
                format!("{path}.mu"),
                format!("must be finite and >= 0, got {}", self.mu),
            ));
        }
        if !self.sigma.is_finite() {
            return Err(ConfigError::field(
                format!("{path}.sigma"),
                "must be finite",
            ));
        }
        Ok(())
    }

    /// `f = a sin x₁ + b x₂ + c x₃ + d + u + μ tanh u`, `g = σ`.
    pub fn plant(&self) -> PlantSpec {
        let p = *self;
        PlantSpec::scalar(
            3,
            move |x, u| p.a * x[0].sin() + p.b * x[1] + p.c * x[2] + p.d + u + p.mu * u.tanh(),
            move |_| p.sigma,
        )
        .and_then(|s| s.with_constants(SEC6_LIPSCHITZ, 0.0, 1.0))
        .expect("sec6 constants are valid")
    }

    /// The same plant written in the expression language.
    pub fn drift_expression(&self) -> String {
        format!(
            "{} * sin(x1) + {} * x2 + {} * x3 + {} + u + {} * tanh(u)",
            self.a, self.b, self.c, self.d, self.mu
        )
    }
}

/// Scalar plant (`d = m = 1`) from a drift expression in `x1 … xn, u` and a
/// diffusion expression in `x1 … xn`.
#[derive(Debug, Clone)]
pub struct ExpressionPlant {
    pub n: usize,
    pub drift: Expr,
    pub diffusion: Expr,
}

impl ExpressionPlant {
    pub fn parse(n: usize, drift: &str, diffusion: &str, path: &str) -> Result<Self, ConfigError> {
        if n == 0 {
            return Err(ConfigError::field(
                format!("{path}.n"),
                "must be at least 1",
            ));
        }
        let drift = parse_expr(drift, n)
            .map_err(|e| ConfigError::field(format!("{path}.drift"), e.to_string()))?;
        let diffusion = parse_expr(diffusion, n)
            .map_err(|e| ConfigError::field(format!("{path}.diffusion"), e.to_string()))?;
        if diffusion.uses_input() {
            return Err(ConfigError::field(
                format!("{path}.diffusion"),
                "the diffusion may depend on x1..xn only",
            ));
        }
        Ok(Self {
            n,
            drift,
            diffusion,
        })
    }

    /// Division by zero evaluates to NaN, which the simulator reports as
    /// divergence and the equilibrium solver as a non-finite value.
    pub fn plant(&self) -> PlantSpec {
        let drift = self.drift.clone();
        let diffusion = self.diffusion.clone();
        let dynamics = FnDynamics::new(
            move |x: &[f64], u: &[f64], out: &mut [f64]| {
                out[0] = drift.eval(x, u[0]).unwrap_or(f64::NAN)
            },
            move |x: &[f64], out: &mut [f64]| out[0] = diffusion.eval(x, 0.0).unwrap_or(f64::NAN),
        );
        PlantSpec::new(
            Dims {
                n: self.n,
                d: 1,
                m: 1,
            },
            Arc::new(dynamics),
        )
        .expect("n >= 1 checked at parse time")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use expid::rng::Philox;

    #[test]
    fn sec6_matches_expression_plant() {
        let rng = Philox::new(1);
        for case in 0..200u64 {
            let mut block = 0;
            let mut u = |lo: f64, hi: f64| {
                block += 1;
                lo + (hi - lo) * rng.uniform(case, 0, block)
            };
            let p = Sec6Params::new(
                u(-0.5, 0.5),
                u(-0.5, 0.5),
                u(-0.5, 0.5),
                u(-10.0, 10.0),
                u(0.0, 8.0),
                u(-1.0, 1.0),
            );
            let builtin = p.plant();
            let expr =
                ExpressionPlant::parse(3, &p.drift_expression(), &p.sigma.to_string(), "plant")
                    .unwrap()
                    .plant();
            for _ in 0..5 {
                let x = [u(-5.0, 5.0), u(-5.0, 5.0), u(-5.0, 5.0)];
                let v = [u(-10.0, 10.0)];
                let a = builtin.drift_vec(&x, &v)[0];
                let b = expr.drift_vec(&x, &v)[0];
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
                let ga = builtin.diffusion_vec(&x)[0];
                let gb = expr.diffusion_vec(&x)[0];
                assert_eq!(ga, gb);
            }
        }
    }

    #[test]
    fn sec6_ranges_enforced() {
        let mut params: BTreeMap<String, f64> =
            SEC6_PARAMS.iter().map(|k| (k.to_string(), 0.1)).collect();
        assert!(Sec6Params::from_map(&params, "plant.params").is_ok());
        params.insert("b".into(), -0.6);
        let err = Sec6Params::from_map(&params, "plant.params").unwrap_err();
        assert_eq!(err.path(), Some("plant.params.b"));
        params.insert("b".into(), 0.5);
        params.insert("mu".into(), -1.0);
        assert_eq!(
            Sec6Params::from_map(&params, "plant.params")
                .unwrap_err()
                .path(),
            Some("plant.params.mu")
        );
        params.remove("mu");
        assert_eq!(
            Sec6Params::from_map(&params, "plant.params")
                .unwrap_err()
                .path(),
            Some("plant.params.mu")
        );
        params.insert("mu".into(), 1.0);
        params.insert("e".into(), 1.0);
        assert_eq!(
            Sec6Params::from_map(&params, "plant.params")
                .unwrap_err()
                .path(),
            Some("plant.params.e")
        );
    }

    #[test]
    fn diffusion_may_not_use_input() {
        let err = ExpressionPlant::parse(2, "u", "0.1 * u", "plant").unwrap_err();
        assert_eq!(err.path(), Some("plant.diffusion"));
        let err = ExpressionPlant::parse(2, "u + x3", "0.1", "plant").unwrap_err();
        assert_eq!(err.path(), Some("plant.drift"));
    }

    #[test]
    fn division_by_zero_is_nan() {
        let p = ExpressionPlant::parse(1, "u / x1", "1", "plant")
            .unwrap()
            .plant();
        assert!(p.drift_vec(&[0.0], &[1.0])[0].is_nan());
    }
}
