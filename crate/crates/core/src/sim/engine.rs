use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Controller, SimError};
use crate::model::{PlantSpec, Setpoint};
use crate::rng::Philox;

/// Any state entry beyond this magnitude counts as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Paths per work unit. Fixed so the reduction tree does not depend on the
/// number of workers.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    /// Statistics are recorded every `record_stride` steps.
    pub record_stride: usize,
    /// Initial plant state, `n·d` entries. The error integral starts at zero.
    pub initial_state: Vec<f64>,
    /// Worker threads; 0 lets rayon decide.
    #[serde(default)]
    pub workers: usize,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn validate(&self, plant: &PlantSpec) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!(
                "horizon must be non-negative, got {}",
                self.horizon
            ));
        }
        if self.paths == 0 {
            return bad("paths must be at least 1".into());
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if self.steps() / 2 > u32::MAX as usize {
            return bad("too many steps for the counter-based generator".into());
        }
        let expected = plant.dims().state_len();
        if self.initial_state.len() != expected {
            return Err(SimError::DimensionMismatch {
                what: "initial_state",
                expected,
                got: self.initial_state.len(),
            });
        }
        Ok(())
    }
}

/// Plant state together with the controller's error integral `∫(y* − x₁)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopState {
    pub x: Vec<f64>,
    pub integral: Vec<f64>,
    pub t: f64,
}

impl ClosedLoopState {
    pub fn new(x: Vec<f64>, d: usize) -> Self {
        Self {
            x,
            integral: vec![0.0; d],
            t: 0.0,
        }
    }
}

/// Scratch space reused across steps of one path.
struct Workspace {
    f: Vec<f64>,
    g: Vec<f64>,
    dw: Vec<f64>,
    normals: Vec<f64>,
    u: Vec<f64>,
}

impl Workspace {
    fn new(plant: &PlantSpec) -> Self {
        let dims = plant.dims();
        Self {
            f: vec![0.0; dims.d],
            g: vec![0.0; dims.d * dims.m],
            dw: vec![0.0; dims.m],
            normals: vec![0.0; 2 * dims.m],
            u: vec![0.0; dims.d],
        }
    }
}

fn step_in_place(
    state: &mut ClosedLoopState,
    plant: &PlantSpec,
    y_star: &[f64],
    u: &[f64],
    dw: &[f64],
    dt: f64,
    f: &mut [f64],
    g: &mut [f64],
) -> bool {
    let dims = plant.dims();
    let (d, m, n) = (dims.d, dims.m, dims.n);
    plant.drift(&state.x, u, f);
    plant.diffusion(&state.x, g);
    for c in 0..d {
        state.integral[c] += (y_star[c] - state.x[c]) * dt;
    }
    for i in 0..n - 1 {
        for c in 0..d {
            state.x[i * d + c] += state.x[(i + 1) * d + c] * dt;
        }
    }
    let last = (n - 1) * d;
    for c in 0..d {
        let mut noise = 0.0;
        for j in 0..m {
            noise += g[c * m + j] * dw[j];
        }
        state.x[last + c] += f[c] * dt + noise;
    }
    state.t += dt;
    state
        .x
        .iter()
        .chain(&state.integral)
        .all(|v| v.is_finite() && v.abs() <= DIVERGENCE_THRESHOLD)
}

/// One Euler-Maruyama step of the closed loop with input `u` held over the
/// step and Brownian increment `dw`. Every right-hand side, including the
/// integral update, is evaluated at the start of the step.
pub fn em_step(
    state: &ClosedLoopState,
    plant: &PlantSpec,
    sp: &Setpoint,
    u: &[f64],
    dw: &[f64],
    dt: f64,
) -> Result<ClosedLoopState, SimError> {
    let dims = plant.dims();
    check_len("x", dims.state_len(), state.x.len())?;
    check_len("integral", dims.d, state.integral.len())?;
    check_len("u", dims.d, u.len())?;
    check_len("dw", dims.m, dw.len())?;
    let mut next = state.clone();
    let mut f = vec![0.0; dims.d];
    let mut g = vec![0.0; dims.d * dims.m];
    if step_in_place(&mut next, plant, &sp.y_star, u, dw, dt, &mut f, &mut g) {
        Ok(next)
    } else {
        Err(SimError::Diverged {
            path: 0,
            time: next.t,
        })
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), SimError> {
    if expected == got {
        Ok(())
    } else {
        Err(SimError::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

/// Drives one path, calling `record(index, state, u)` at every recorded step.
fn run_path(
    plant: &PlantSpec,
    sp: &Setpoint,
    controller: &Controller,
    cfg: &SimConfig,
    rng: &Philox,
    path: u64,
    ws: &mut Workspace,
    mut record: impl FnMut(usize, &ClosedLoopState, &[f64]),
) -> Result<(), SimError> {
    let dims = plant.dims();
    let m = dims.m;
    let steps = cfg.steps();
    let sqrt_dt = cfg.dt.sqrt();
    let mut state = ClosedLoopState::new(cfg.initial_state.clone(), dims.d);
    for step in 0..=steps {
        controller.evaluate(&state.x, &state.integral, &sp.y_star, &mut ws.u);
        if step % cfg.record_stride == 0 {
            record(step / cfg.record_stride, &state, &ws.u);
        }
        if step == steps {
            break;
        }
        // Normals for steps 2j and 2j+1 come from the same counter address.
        if step % 2 == 0 {
            rng.fill_normals(path, (step / 2) as u64, &mut ws.normals);
        }
        let offset = (step % 2) * m;
        for j in 0..m {
            ws.dw[j] = ws.normals[offset + j] * sqrt_dt;
        }
        state.t = step as f64 * cfg.dt;
        if !step_in_place(
            &mut state, plant, &sp.y_star, &ws.u, &ws.dw, cfg.dt, &mut ws.f, &mut ws.g,
        ) {
            return Err(SimError::Diverged {
                path,
                time: (step + 1) as f64 * cfg.dt,
            });
        }
    }
    Ok(())
}

/// Recorded states of a single path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ClosedLoopState>,
    pub inputs: Vec<Vec<f64>>,
}

/// Simulates path number `path` of the ensemble described by `cfg`, with the
/// same noise it receives inside [`simulate_paths`].
pub fn trajectory(
    plant: &PlantSpec,
    sp: &Setpoint,
    controller: &Controller,
    cfg: &SimConfig,
    path: u64,
) -> Result<Trajectory, SimError> {
    cfg.validate(plant)?;
    let rng = Philox::new(cfg.seed);
    let mut ws = Workspace::new(plant);
    let mut out = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
    };
    run_path(
        plant,
        sp,
        controller,
        cfg,
        &rng,
        path,
        &mut ws,
        |k, s, u| {
            out.times.push(k as f64 * cfg.record_stride as f64 * cfg.dt);
            let mut s = s.clone();
            s.t = *out.times.last().unwrap();
            out.states.push(s);
            out.inputs.push(u.to_vec());
        },
    )?;
    Ok(out)
}

/// Count, mean and central moment sums of order 2 to 4, mergeable in any
/// tree shape.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.merge(&Moments {
            n: 1.0,
            mean: x,
            ..Moments::default()
        });
    }

    fn merge(&mut self, b: &Moments) {
        let a = *self;
        if b.n == 0.0 {
            return;
        }
        if a.n == 0.0 {
            *self = *b;
            return;
        }
        let n = a.n + b.n;
        let delta = b.mean - a.mean;
        let d_n = delta / n;
        let d2 = delta * delta;
        let ab = a.n * b.n;
        self.n = n;
        self.mean = a.mean + b.n * d_n;
        self.m2 = a.m2 + b.m2 + d2 * ab / n;
        self.m3 = a.m3
            + b.m3
            + delta * d2 * ab * (a.n - b.n) / (n * n)
            + 3.0 * d_n * (a.n * b.m2 - b.n * a.m2);
        self.m4 = a.m4
            + b.m4
            + d2 * d2 * ab * (a.n * a.n - ab + b.n * b.n) / (n * n * n)
            + 6.0 * d2 * (a.n * a.n * b.m2 + b.n * b.n * a.m2) / (n * n)
            + 4.0 * d_n * (a.n * b.m3 - b.n * a.m3);
    }

    /// Unbiased sample variance.
    fn variance(&self) -> f64 {
        if self.n > 1.0 {
            (self.m2 / (self.n - 1.0)).max(0.0)
        } else {
            0.0
        }
    }

    fn stderr(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }
}

/// Per-record moments over paths.
#[derive(Debug, Clone)]
struct Accum {
    count: f64,
    /// `|e|²` and `|x − z*|²` per record.
    err: Vec<Moments>,
    dev: Vec<Moments>,
    /// Error and input components, `d` per record.
    err_lin: Vec<Moments>,
    u: Vec<Moments>,
}

impl Accum {
    fn new(records: usize, d: usize) -> Self {
        Self {
            count: 0.0,
            err: vec![Moments::default(); records],
            dev: vec![Moments::default(); records],
            err_lin: vec![Moments::default(); records * d],
            u: vec![Moments::default(); records * d],
        }
    }

    fn merge(mut self, other: &Accum) -> Accum {
        self.count += other.count;
        let pairs = [
            (&mut self.err, &other.err),
            (&mut self.dev, &other.dev),
            (&mut self.err_lin, &other.err_lin),
            (&mut self.u, &other.u),
        ];
        for (mine, theirs) in pairs {
            for (a, b) in mine.iter_mut().zip(theirs) {
                a.merge(b);
            }
        }
        self
    }
}

/// Moment estimates over an ensemble, one entry per recorded time.
///
/// Standard errors are `s/√N` with `s` the sample standard deviation of the
/// per-path quantity. For `var_u` the standard error uses the large-sample
/// formula `√((m₄ − m₂²)/N)` per component, combined as if the components
/// were independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub paths: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `E|y* − x₁|²`.
    pub mean_sq_error: Vec<f64>,
    pub mean_sq_error_se: Vec<f64>,
    /// `E|x − z*|²`.
    pub mean_sq_state_dev: Vec<f64>,
    pub mean_sq_state_dev_se: Vec<f64>,
    /// `E(y* − x₁)`, one vector per time.
    pub mean_error: Vec<Vec<f64>>,
    /// `E u`, one vector per time.
    pub mean_u: Vec<Vec<f64>>,
    /// `E|u|²`.
    pub mean_sq_u: Vec<f64>,
    /// `Σ_c Var(u_c)`.
    pub var_u: Vec<f64>,
    pub var_u_se: Vec<f64>,
}

impl EnsembleStats {
    fn from_accum(acc: &Accum, times: Vec<f64>, d: usize, dt: f64) -> Self {
        let n = acc.count;
        let records = times.len();
        let mut out = EnsembleStats {
            paths: n as usize,
            dt,
            times,
            mean_sq_error: Vec::with_capacity(records),
            mean_sq_error_se: Vec::with_capacity(records),
            mean_sq_state_dev: Vec::with_capacity(records),
            mean_sq_state_dev_se: Vec::with_capacity(records),
            mean_error: Vec::with_capacity(records),
            mean_u: Vec::with_capacity(records),
            mean_sq_u: Vec::with_capacity(records),
            var_u: Vec::with_capacity(records),
            var_u_se: Vec::with_capacity(records),
        };
        for r in 0..records {
            out.mean_sq_error.push(acc.err[r].mean);
            out.mean_sq_error_se.push(acc.err[r].stderr());
            out.mean_sq_state_dev.push(acc.dev[r].mean);
            out.mean_sq_state_dev_se.push(acc.dev[r].stderr());
            out.mean_error.push(
                acc.err_lin[r * d..(r + 1) * d]
                    .iter()
                    .map(|m| m.mean)
                    .collect(),
            );
            let comps = &acc.u[r * d..(r + 1) * d];
            out.mean_u.push(comps.iter().map(|m| m.mean).collect());
            let (mut sq, mut var, mut se2) = (0.0, 0.0, 0.0);
            for m in comps {
                let c2 = m.m2 / n;
                let c4 = m.m4 / n;
                sq += c2 + m.mean * m.mean;
                var += m.variance();
                se2 += (c4 - c2 * c2).max(0.0) / n;
            }
            out.mean_sq_u.push(sq);
            out.var_u.push(var);
            out.var_u_se.push(se2.sqrt());
        }
        out
    }

    /// Index of the last recorded time `≤ t`.
    pub fn index_at(&self, t: f64) -> usize {
        let tol = 1e-9 * self.dt;
        self.times.iter().rposition(|&s| s <= t + tol).unwrap_or(0)
    }
}

fn tree_reduce(mut parts: Vec<Accum>) -> Accum {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(&b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// Monte Carlo estimate of the closed-loop moments.
///
/// Path `p` uses the noise stream `p` of a Philox generator keyed by
/// `cfg.seed`, and paths are reduced in a fixed order, so the result is
/// bitwise identical for any number of workers. If paths diverge, the error
/// names the lowest-numbered one.
pub fn simulate_paths(
    plant: &PlantSpec,
    sp: &Setpoint,
    controller: &Controller,
    cfg: &SimConfig,
) -> Result<EnsembleStats, SimError> {
    cfg.validate(plant)?;
    let dims = plant.dims();
    let d = dims.d;
    check_len("y_star", d, sp.y_star.len())?;
    check_len("z_star", dims.state_len(), sp.z_star.len())?;
    let steps = cfg.steps();
    let records = steps / cfg.record_stride + 1;
    let times: Vec<f64> = (0..records)
        .map(|k| (k * cfg.record_stride) as f64 * cfg.dt)
        .collect();
    let rng = Philox::new(cfg.seed);
    let chunks: Vec<usize> = (0..cfg.paths.div_ceil(CHUNK)).collect();

    let run_chunk = |chunk: usize| -> Result<Accum, SimError> {
        let mut acc = Accum::new(records, d);
        let mut ws = Workspace::new(plant);
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(cfg.paths);
        for path in start..end {
            run_path(
                plant,
                sp,
                controller,
                cfg,
                &rng,
                path as u64,
                &mut ws,
                |r, s, u| {
                    let mut e2 = 0.0;
                    for c in 0..d {
                        let e = sp.y_star[c] - s.x[c];
                        e2 += e * e;
                        acc.err_lin[r * d + c].push(e);
                        acc.u[r * d + c].push(u[c]);
                    }
                    let dev2: f64 =
                        s.x.iter()
                            .zip(&sp.z_star)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                    acc.err[r].push(e2);
                    acc.dev[r].push(dev2);
                },
            )?;
            acc.count += 1.0;
        }
        Ok(acc)
    };

    let results: Vec<Result<Accum, SimError>> = if cfg.workers == 1 {
        chunks.into_iter().map(run_chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        pool.install(|| chunks.into_par_iter().map(run_chunk).collect())
    };
    let parts = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let total = tree_reduce(parts);
    Ok(EnsembleStats::from_accum(&total, times, d, cfg.dt))
}
