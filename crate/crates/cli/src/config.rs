//! JSON run configuration with `plant`, `gains`, `sim` and `bounds` sections.

use std::collections::BTreeMap;
use std::path::Path;

use expid::design::{geometric_gains, lambda_gains, sec6_pattern, LambdaOverrides};
use expid::{solve_equilibrium, Controller, GainKind, GainVector, PlantSpec, Setpoint, SimConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{ExpressionPlant, Sec6Params};

/// Environment variable holding the default number of simulation workers.
pub const WORKERS_ENV: &str = "EXPID_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

impl ConfigError {
    pub fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Field {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Dotted path of the offending field, if the error is about one.
    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Field { path, .. } => Some(path),
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    /// `sec6` or `expression`.
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub n: Option<usize>,
    pub drift: Option<String>,
    pub diffusion: Option<String>,
    pub lipschitz_l: Option<f64>,
    pub lipschitz_m: Option<f64>,
    pub gain_lower_b: Option<f64>,
}

impl PlantConfig {
    pub fn sec6(params: Sec6Params) -> Self {
        Self {
            kind: "sec6".into(),
            params: [
                ("a", params.a),
                ("b", params.b),
                ("c", params.c),
                ("d", params.d),
                ("mu", params.mu),
                ("sigma", params.sigma),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            n: None,
            drift: None,
            diffusion: None,
            lipschitz_l: None,
            lipschitz_m: None,
            gain_lower_b: None,
        }
    }

    pub fn build(&self) -> Result<PlantSpec, ConfigError> {
        let plant = match self.kind.as_str() {
            "sec6" => {
                for (name, set) in [
                    ("n", self.n.is_some()),
                    ("drift", self.drift.is_some()),
                    ("diffusion", self.diffusion.is_some()),
                ] {
                    if set {
                        return Err(ConfigError::field(
                            format!("plant.{name}"),
                            "not allowed for the sec6 plant",
                        ));
                    }
                }
                Sec6Params::from_map(&self.params, "plant.params")?.plant()
            }
            "expression" => {
                if !self.params.is_empty() {
                    return Err(ConfigError::field(
                        "plant.params",
                        "expression plants take literal constants in the expressions",
                    ));
                }
                let n = self
                    .n
                    .ok_or_else(|| ConfigError::field("plant.n", "missing"))?;
                let drift = self
                    .drift
                    .as_deref()
                    .ok_or_else(|| ConfigError::field("plant.drift", "missing"))?;
                let diffusion = self.diffusion.as_deref().unwrap_or("0");
                ExpressionPlant::parse(n, drift, diffusion, "plant")?.plant()
            }
            other => {
                return Err(ConfigError::field(
                    "plant.kind",
                    format!("unknown plant `{other}` (expected `sec6` or `expression`)"),
                ))
            }
        };
        let l = self.lipschitz_l.unwrap_or(plant.lipschitz_l());
        let m = self.lipschitz_m.unwrap_or(plant.lipschitz_m());
        let b = self.gain_lower_b.unwrap_or(plant.gain_lower_b());
        plant.with_constants(l, m, b).map_err(|e| {
            let field = match &e {
                expid::ModelError::BadConstant { name: "L", .. } => "plant.lipschitz_l",
                expid::ModelError::BadConstant { name: "M", .. } => "plant.lipschitz_m",
                _ => "plant.gain_lower_b",
            };
            ConfigError::field(field, e.to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainsConfig {
    /// `(k, 2.5k, 2.5k, k)`.
    Sec6 {
        k: f64,
    },
    /// `k_i = 3^{−i(i+1)/2} k`.
    Geometric {
        k: f64,
        n: usize,
    },
    /// Decay-rate design; `L`, `M`, `b̲` and `n` come from the plant.
    Lambda {
        lambda: f64,
        betas: Option<Vec<f64>>,
        k: Option<f64>,
    },
    Explicit {
        kind: GainKind,
        gains: Vec<f64>,
    },
}

/// Gains resolved from a [`GainsConfig`], with the β's of a decay-rate design.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedGains {
    pub gains: GainVector,
    pub betas: Option<Vec<f64>>,
    pub lambda: Option<f64>,
}

impl GainsConfig {
    pub fn resolve(&self, plant: &PlantSpec) -> Result<ResolvedGains, ConfigError> {
        let err = |field: &str, e: expid::DesignError| {
            ConfigError::field(format!("gains.{field}"), e.to_string())
        };
        let plain = |gains| ResolvedGains {
            gains,
            betas: None,
            lambda: None,
        };
        Ok(match self {
            GainsConfig::Sec6 { k } => plain(sec6_pattern(*k).map_err(|e| err("k", e))?),
            GainsConfig::Geometric { k, n } => {
                plain(geometric_gains(*k, *n).map_err(|e| err("k", e))?)
            }
            GainsConfig::Lambda { lambda, betas, k } => {
                let overrides = LambdaOverrides {
                    betas: betas.clone(),
                    k: *k,
                };
                let d = lambda_gains(
                    *lambda,
                    plant.lipschitz_l(),
                    plant.lipschitz_m(),
                    plant.dims().n,
                    plant.gain_lower_b(),
                    &overrides,
                )
                .map_err(|e| {
                    let field = match e {
                        expid::DesignError::InvalidBeta { .. } => "betas",
                        expid::DesignError::InvalidScale { .. } => "k",
                        _ => "lambda",
                    };
                    err(field, e)
                })?;
                ResolvedGains {
                    gains: d.gains,
                    betas: Some(d.betas),
                    lambda: Some(*lambda),
                }
            }
            GainsConfig::Explicit { kind, gains } => {
                plain(GainVector::new(*kind, gains.clone()).map_err(|e| err("gains", e))?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerChoice {
    Pid,
    Pd,
    OpenLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub y_star: f64,
    pub initial_state: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    pub controller: Option<ControllerChoice>,
    /// Constant input for `open_loop`.
    #[serde(default)]
    pub input: f64,
    pub workers: Option<usize>,
}

pub fn default_dt() -> f64 {
    1e-3
}

pub fn default_horizon() -> f64 {
    30.0
}

pub fn default_paths() -> usize {
    20_000
}

pub fn default_stride() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    /// Decay rate for the explicit bounds; defaults to the λ of a decay-rate design.
    pub lambda: Option<f64>,
    /// Growth constant `R` of the lower bound.
    #[serde(default = "default_r")]
    pub r: f64,
}

fn default_r() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub gains: Option<GainsConfig>,
    pub sim: Option<SimSection>,
    pub bounds: Option<BoundsSection>,
}

/// Everything needed to simulate, built from a validated [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Run {
    pub plant: PlantSpec,
    pub setpoint: Setpoint,
    pub controller: Controller,
    pub gains: Option<ResolvedGains>,
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            ConfigError::field(path, e.into_inner().to_string())
        })
    }

    pub fn load(file: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(file).map_err(|source| ConfigError::Io {
            file: file.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn resolve_gains(&self, plant: &PlantSpec) -> Result<Option<ResolvedGains>, ConfigError> {
        self.gains.as_ref().map(|g| g.resolve(plant)).transpose()
    }

    /// Validates every section and assembles a simulation.
    pub fn build(&self) -> Result<Run, ConfigError> {
        let plant = self.plant.build()?;
        let gains = self.resolve_gains(&plant)?;
        let sim = self
            .sim
            .as_ref()
            .ok_or_else(|| ConfigError::field("sim", "missing"))?;
        let n = plant.dims().n;
        if sim.initial_state.len() != n {
            return Err(ConfigError::field(
                "sim.initial_state",
                format!("expected {n} entries, got {}", sim.initial_state.len()),
            ));
        }
        if !(sim.dt > 0.0 && sim.dt.is_finite()) {
            return Err(ConfigError::field("sim.dt", "must be positive"));
        }
        if !(sim.horizon >= sim.dt && sim.horizon.is_finite()) {
            return Err(ConfigError::field("sim.horizon", "must be at least dt"));
        }
        if sim.paths == 0 {
            return Err(ConfigError::field("sim.paths", "must be at least 1"));
        }
        if sim.record_stride == 0 {
            return Err(ConfigError::field(
                "sim.record_stride",
                "must be at least 1",
            ));
        }
        let setpoint = solve_equilibrium(&plant, &[sim.y_star])
            .map_err(|e| ConfigError::field("sim.y_star", format!("no equilibrium input: {e}")))?;

        let choice = sim.controller.unwrap_or(match &gains {
            Some(g) if g.gains.kind() == GainKind::Pd => ControllerChoice::Pd,
            Some(_) => ControllerChoice::Pid,
            None => ControllerChoice::OpenLoop,
        });
        let controller = match (choice, &gains) {
            (ControllerChoice::OpenLoop, _) => Controller::OpenLoop {
                input: vec![sim.input],
            },
            (_, None) => {
                return Err(ConfigError::field(
                    "gains",
                    "missing (required by the controller)",
                ))
            }
            (choice, Some(g)) => {
                let want = if choice == ControllerChoice::Pid {
                    GainKind::Pid
                } else {
                    GainKind::Pd
                };
                if g.gains.kind() != want {
                    return Err(ConfigError::field(
                        "sim.controller",
                        format!("controller needs {want:?} gains, got {:?}", g.gains.kind()),
                    ));
                }
                if g.gains.n() != n {
                    return Err(ConfigError::field(
                        "gains",
                        format!("gains are for n = {}, plant has n = {n}", g.gains.n()),
                    ));
                }
                Controller::from_gains(g.gains.clone())
            }
        };
        let workers = match sim.workers {
            Some(w) => w,
            None => workers_from_env()?,
        };
        Ok(Run {
            plant,
            setpoint,
            controller,
            gains,
            sim: SimConfig {
                dt: sim.dt,
                horizon: sim.horizon,
                paths: sim.paths,
                seed: sim.seed,
                record_stride: sim.record_stride,
                initial_state: sim.initial_state.clone(),
                workers,
            },
        })
    }
}

/// Worker count from [`WORKERS_ENV`], 0 (automatic) when unset.
pub fn workers_from_env() -> Result<usize, ConfigError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| ConfigError::field(WORKERS_ENV, format!("not a worker count: `{v}`"))),
        Err(_) => Ok(0),
    }
}
