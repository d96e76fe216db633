//! Reproduction jobs for the three benchmark figures and parameter sweeps.

use std::path::{Path, PathBuf};

use expid::{
    check_gains, sec6_pattern, simulate_paths, solve_equilibrium, Controller, EnsembleStats,
    GainVector, ModelError, SimConfig, SimError,
};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, GainsConfig, RunConfig};
use crate::output::{self, Columns, Curve, Panel, ERROR_COLUMNS, INPUT_COLUMNS};
use crate::plant::Sec6Params;

#[derive(Debug, Error)]
pub enum JobError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Gain scale of the benchmark runs: `(8.6, 21.5, 21.5, 8.6)`.
pub const BENCHMARK_K: f64 = 8.6;
pub const BENCHMARK_Y_STAR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproduceOptions {
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub record_stride: usize,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self {
            paths: 20_000,
            dt: 1e-3,
            horizon: 30.0,
            seed: 1,
            record_stride: 100,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        }
    }

    fn columns(self) -> &'static Columns<'static> {
        match self {
            Figure::Fig3 => &INPUT_COLUMNS,
            _ => &ERROR_COLUMNS,
        }
    }
}

impl std::str::FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            other => Err(format!(
                "unknown figure `{other}` (expected fig1, fig2 or fig3)"
            )),
        }
    }
}

/// Parameter tuples `(a, b, c, d, μ, σ)` of the first figure.
pub const FIG1_PARAMS: [[f64; 6]; 5] = [
    [0.4, -0.3, 0.5, 6.0, 5.2, 0.2],
    [-0.5, 0.5, -0.2, -3.0, 1.0, 0.3],
    [0.2, 0.1, -0.5, 10.0, 0.0, 0.1],
    [0.0, -0.5, 0.3, 0.0, 8.0, 0.4],
    [0.5, 0.0, 0.0, -8.0, 2.5, 0.0],
];
pub const FIG1_INITIAL: [f64; 3] = [0.5, 0.5, 0.3];
pub const FIG2_INITIAL: [f64; 3] = [0.9, 0.0, 0.1];
pub const FIG3_INITIAL: [f64; 3] = [1.3, 0.0, 0.1];
pub const NOISE_LEVELS: [f64; 3] = [0.0, 0.2, 0.4];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSpec {
    pub file: String,
    pub label: String,
    pub params: Sec6Params,
    pub initial_state: Vec<f64>,
}

pub fn figure_curves(fig: Figure) -> Vec<CurveSpec> {
    let base = Sec6Params::new(0.4, -0.3, 0.5, 6.0, 5.2, 0.0);
    match fig {
        Figure::Fig1 => FIG1_PARAMS
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let params = Sec6Params::new(p[0], p[1], p[2], p[3], p[4], p[5]);
                CurveSpec {
                    file: format!("fig1_case{}.csv", i + 1),
                    label: format!(
                        "(a,b,c,d,mu,sigma) = ({},{},{},{},{},{})",
                        p[0], p[1], p[2], p[3], p[4], p[5]
                    ),
                    params,
                    initial_state: FIG1_INITIAL.to_vec(),
                }
            })
            .collect(),
        Figure::Fig2 | Figure::Fig3 => {
            let x0 = if fig == Figure::Fig2 {
                FIG2_INITIAL
            } else {
                FIG3_INITIAL
            };
            NOISE_LEVELS
                .iter()
                .map(|&sigma| CurveSpec {
                    file: format!("{}_sigma_{sigma}.csv", fig.name()),
                    label: format!("sigma = {sigma}"),
                    params: base.with_sigma(sigma),
                    initial_state: x0.to_vec(),
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurveResult {
    pub spec: CurveSpec,
    pub u_star: f64,
    pub stats: EnsembleStats,
}

fn sim_config(opts: &ReproduceOptions, x0: &[f64]) -> SimConfig {
    SimConfig {
        dt: opts.dt,
        horizon: opts.horizon,
        paths: opts.paths,
        seed: opts.seed,
        record_stride: opts.record_stride,
        initial_state: x0.to_vec(),
        workers: opts.workers,
    }
}

/// Runs every curve of `fig`. All curves share the seed, so they see the same
/// Brownian paths.
pub fn run_figure(fig: Figure, opts: &ReproduceOptions) -> Result<Vec<CurveResult>, JobError> {
    let gains = sec6_pattern(BENCHMARK_K).map_err(|e| JobError::Invalid(e.to_string()))?;
    let controller = Controller::from_gains(gains);
    figure_curves(fig)
        .into_iter()
        .map(|spec| {
            let plant = spec.params.plant();
            let sp = solve_equilibrium(&plant, &[BENCHMARK_Y_STAR])?;
            let stats = simulate_paths(
                &plant,
                &sp,
                &controller,
                &sim_config(opts, &spec.initial_state),
            )?;
            Ok(CurveResult {
                u_star: sp.u_star[0],
                spec,
                stats,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct CurveMeta<'a> {
    file: &'a str,
    label: &'a str,
    params: Sec6Params,
    initial_state: &'a [f64],
    u_star: f64,
}

#[derive(Serialize)]
struct FigureMeta<'a> {
    figure: &'a str,
    plant: &'a str,
    y_star: f64,
    gains: &'a [f64],
    controller: &'a str,
    sim: &'a ReproduceOptions,
    columns: &'a [&'a str],
    curves: Vec<CurveMeta<'a>>,
}

/// Writes one CSV per curve, `<fig>.gp` and `<fig>_metadata.json` into `dir`.
pub fn write_figure(
    fig: Figure,
    opts: &ReproduceOptions,
    results: &[CurveResult],
    dir: &Path,
) -> Result<Vec<PathBuf>, JobError> {
    std::fs::create_dir_all(dir)?;
    let cols = fig.columns();
    let mut written = Vec::new();
    for r in results {
        let path = dir.join(&r.spec.file);
        output::write_csv_file(&path, |f| output::write_columns(f, &r.stats, cols))?;
        written.push(path);
    }

    let curves = |column: usize| -> Vec<Curve> {
        results
            .iter()
            .map(|r| Curve {
                file: r.spec.file.clone(),
                column,
                title: r.spec.label.clone(),
            })
            .collect()
    };
    let panels = match fig {
        Figure::Fig3 => vec![
            Panel {
                ylabel: "E|u(t)|^2".into(),
                log_y: false,
                curves: curves(2),
            },
            Panel {
                ylabel: "Var(u(t))".into(),
                log_y: false,
                curves: curves(3),
            },
        ],
        _ => vec![Panel {
            ylabel: "E|e(t)|^2".into(),
            log_y: true,
            curves: curves(2),
        }],
    };
    let script = dir.join(format!("{}.gp", fig.name()));
    std::fs::write(
        &script,
        output::gnuplot_script(&format!("{}.png", fig.name()), &panels),
    )?;
    written.push(script);

    let gains = sec6_pattern(BENCHMARK_K).map_err(|e| JobError::Invalid(e.to_string()))?;
    let meta = FigureMeta {
        figure: fig.name(),
        plant: "f = a sin x1 + b x2 + c x3 + d + u + mu tanh u, g = sigma",
        y_star: BENCHMARK_Y_STAR,
        gains: gains.as_slice(),
        controller: "pid",
        sim: opts,
        columns: cols.names,
        curves: results
            .iter()
            .map(|r| CurveMeta {
                file: &r.spec.file,
                label: &r.spec.label,
                params: r.spec.params,
                initial_state: &r.spec.initial_state,
                u_star: r.u_star,
            })
            .collect(),
    };
    let meta_path = dir.join(format!("{}_metadata.json", fig.name()));
    let mut text =
        serde_json::to_string_pretty(&meta).map_err(|e| JobError::Invalid(e.to_string()))?;
    text.push('\n');
    std::fs::write(&meta_path, text)?;
    written.push(meta_path);
    Ok(written)
}

/// Average of `mean_sq_error` over records with `t ≥ from`, and the average
/// per-time standard error over the same records.
pub fn steady_state(stats: &EnsembleStats, from: f64) -> (f64, f64) {
    let start = stats
        .times
        .iter()
        .position(|&t| t >= from - 1e-9 * stats.dt)
        .unwrap_or(stats.times.len() - 1);
    let window = stats.times.len() - start;
    let mean = stats.mean_sq_error[start..].iter().sum::<f64>() / window as f64;
    let se = stats.mean_sq_error_se[start..].iter().sum::<f64>() / window as f64;
    (mean, se)
}

/// Average of `var_u` over records with `t ≥ from`.
pub fn steady_var_u(stats: &EnsembleStats, from: f64) -> f64 {
    let start = stats
        .times
        .iter()
        .position(|&t| t >= from - 1e-9 * stats.dt)
        .unwrap_or(stats.times.len() - 1);
    stats.var_u[start..].iter().sum::<f64>() / (stats.times.len() - start) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Constant diffusion level.
    Sigma,
    /// Common factor applied to every gain.
    Scale,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Sigma => "sigma",
            SweepAxis::Scale => "scale",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub admissible: bool,
    pub steady_mean_sq_error: f64,
    pub stderr: f64,
    pub steady_var_u: f64,
}

fn with_sigma(cfg: &RunConfig, sigma: f64) -> Result<RunConfig, JobError> {
    let mut cfg = cfg.clone();
    match cfg.plant.kind.as_str() {
        "sec6" => {
            cfg.plant.params.insert("sigma".into(), sigma);
        }
        "expression" => cfg.plant.diffusion = Some(output::num(sigma)),
        other => {
            return Err(ConfigError::field("plant.kind", format!("unknown plant `{other}`")).into())
        }
    }
    Ok(cfg)
}

fn with_scale(cfg: &RunConfig, scale: f64) -> Result<RunConfig, JobError> {
    let plant = cfg.plant.build()?;
    let g = cfg
        .resolve_gains(&plant)?
        .ok_or_else(|| ConfigError::field("gains", "missing (required for a gain sweep)"))?;
    let scaled: Vec<f64> = g.gains.as_slice().iter().map(|k| k * scale).collect();
    let mut cfg = cfg.clone();
    cfg.gains = Some(GainsConfig::Explicit {
        kind: g.gains.kind(),
        gains: scaled,
    });
    Ok(cfg)
}

/// Simulates `cfg` once per value and reports the steady-state error over
/// `t ≥ window_start` (default: the second half of the horizon).
pub fn run_sweep(
    cfg: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    window_start: Option<f64>,
) -> Result<Vec<SweepRow>, JobError> {
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let variant = match axis {
            SweepAxis::Sigma => with_sigma(cfg, value)?,
            SweepAxis::Scale => {
                if !(value > 0.0) {
                    return Err(JobError::Invalid(format!(
                        "gain scale must be positive, got {value}"
                    )));
                }
                with_scale(cfg, value)?
            }
        };
        let run = variant.build()?;
        let admissible = match run.gains.as_ref() {
            Some(g) => gains_admissible(&g.gains, &run.plant),
            None => false,
        };
        let stats = simulate_paths(&run.plant, &run.setpoint, &run.controller, &run.sim)?;
        let from = window_start.unwrap_or(run.sim.horizon / 2.0);
        let (mean, se) = steady_state(&stats, from);
        rows.push(SweepRow {
            value,
            admissible,
            steady_mean_sq_error: mean,
            stderr: se,
            steady_var_u: steady_var_u(&stats, from),
        });
    }
    Ok(rows)
}

fn gains_admissible(g: &GainVector, plant: &expid::PlantSpec) -> bool {
    check_gains(
        g,
        plant.lipschitz_l(),
        plant.lipschitz_m(),
        plant.gain_lower_b(),
    )
    .map(|r| r.admissible)
    .unwrap_or(false)
}

pub fn write_sweep<W: std::io::Write>(
    out: W,
    axis: SweepAxis,
    rows: &[SweepRow],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        axis.name(),
        "admissible",
        "steady_mean_sq_error",
        "stderr",
        "steady_var_u",
    ])?;
    for r in rows {
        w.write_record([
            output::num(r.value),
            r.admissible.to_string(),
            output::num(r.steady_mean_sq_error),
            output::num(r.stderr),
            output::num(r.steady_var_u),
        ])?;
    }
    w.flush()?;
    Ok(())
}
