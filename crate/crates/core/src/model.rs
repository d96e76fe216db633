//! Plant description, equilibrium input, and the state coordinates used by
//! the controller analysis.
//!
//! A plant is an `n`-fold chain of integrators in `ℝ^d` whose last block is
//! driven by an uncertain drift `f(x; u)` and a diffusion `g(x)` against an
//! `m`-dimensional Brownian motion:
//!
//! ```text
//! dx_i = x_{i+1} dt                  (1 ≤ i < n)
//! dx_n = f(x; u) dt + g(x) dB_t
//! y    = x_1
//! ```

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::rng::Philox;

/// Drift and diffusion of the last integrator block.
///
/// Implementations must be pure functions of their arguments: the simulator
/// calls them concurrently from several worker threads.
pub trait Dynamics: Send + Sync {
    /// Writes `f(x; u)` into `out` (`x` has `n·d` entries, `u` and `out` have `d`).
    fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]);

    /// Writes `g(x)` into `out` as a row-major `d × m` matrix.
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
}

/// Adapter turning a pair of closures into [`Dynamics`].
pub struct FnDynamics<F, G> {
    drift: F,
    diffusion: G,
}

impl<F, G> FnDynamics<F, G>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(drift: F, diffusion: G) -> Self {
        Self { drift, diffusion }
    }
}

impl<F, G> Dynamics for FnDynamics<F, G>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.drift)(x, u, out)
    }

    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Relative degree.
    pub n: usize,
    /// Output (and input) dimension.
    pub d: usize,
    /// Brownian dimension.
    pub m: usize,
}

impl Dims {
    pub fn state_len(&self) -> usize {
        self.n * self.d
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimensions must be positive, got n={n}, d={d}, m={m}")]
    BadDimensions { n: usize, d: usize, m: usize },
    #[error("{name} must be {requirement}, got {value}")]
    BadConstant {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("equilibrium solver stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("plant returned a non-finite value at u = {u:?}")]
    NonFinite { u: Vec<f64> },
    #[error("every beta must be positive, beta[{index}] = {value}")]
    DegenerateBeta { index: usize, value: f64 },
    #[error("expected {expected} entries for {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// A plant together with the constants asserted for it.
///
/// The Lipschitz constants `L` (drift in `x`) and `M` (diffusion in `x`,
/// Hilbert-Schmidt norm) and the lower bound `b̲` on the symmetric part of
/// `∂f/∂u` are claims made by the user. They are not derived from the
/// dynamics; [`PlantSpec::falsify_lipschitz`] can only refute them.
#[derive(Clone)]
pub struct PlantSpec {
    dims: Dims,
    dynamics: Arc<dyn Dynamics>,
    lipschitz_l: f64,
    lipschitz_m: f64,
    gain_lower_b: f64,
}

impl fmt::Debug for PlantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantSpec")
            .field("dims", &self.dims)
            .field("lipschitz_l", &self.lipschitz_l)
            .field("lipschitz_m", &self.lipschitz_m)
            .field("gain_lower_b", &self.gain_lower_b)
            .finish_non_exhaustive()
    }
}

impl PlantSpec {
    pub fn new(dims: Dims, dynamics: Arc<dyn Dynamics>) -> Result<Self, ModelError> {
        let Dims { n, d, m } = dims;
        if n == 0 || d == 0 || m == 0 {
            return Err(ModelError::BadDimensions { n, d, m });
        }
        Ok(Self {
            dims,
            dynamics,
            lipschitz_l: 0.0,
            lipschitz_m: 0.0,
            gain_lower_b: 1.0,
        })
    }

    /// Scalar plant (`d = m = 1`) from closures.
    pub fn scalar<F, G>(n: usize, drift: F, diffusion: G) -> Result<Self, ModelError>
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let dynamics = FnDynamics::new(
            move |x: &[f64], u: &[f64], out: &mut [f64]| out[0] = drift(x, u[0]),
            move |x: &[f64], out: &mut [f64]| out[0] = diffusion(x),
        );
        Self::new(Dims { n, d: 1, m: 1 }, Arc::new(dynamics))
    }

    pub fn with_constants(mut self, l: f64, m: f64, b_lower: f64) -> Result<Self, ModelError> {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(ModelError::BadConstant {
                name: "L",
                requirement: "finite and nonnegative",
                value: l,
            });
        }
        if !(m >= 0.0 && m.is_finite()) {
            return Err(ModelError::BadConstant {
                name: "M",
                requirement: "finite and nonnegative",
                value: m,
            });
        }
        if !(b_lower > 0.0 && b_lower.is_finite()) {
            return Err(ModelError::BadConstant {
                name: "b_lower",
                requirement: "finite and positive",
                value: b_lower,
            });
        }
        self.lipschitz_l = l;
        self.lipschitz_m = m;
        self.gain_lower_b = b_lower;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn lipschitz_l(&self) -> f64 {
        self.lipschitz_l
    }

    pub fn lipschitz_m(&self) -> f64 {
        self.lipschitz_m
    }

    pub fn gain_lower_b(&self) -> f64 {
        self.gain_lower_b
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.dynamics.drift(x, u, out)
    }

    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        self.dynamics.diffusion(x, out)
    }

    pub fn drift_vec(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.d];
        self.drift(x, u, &mut out);
        out
    }

    pub fn diffusion_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.d * self.dims.m];
        self.diffusion(x, &mut out);
        out
    }

    /// `z* = (y*, 0, …, 0)`.
    pub fn setpoint_state(&self, y_star: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dims.state_len()];
        z[..self.dims.d].copy_from_slice(y_star);
        z
    }

    /// Squared Hilbert-Schmidt norm of `g` at a state.
    pub fn noise_floor(&self, x: &[f64]) -> f64 {
        self.diffusion_vec(x).iter().map(|g| g * g).sum()
    }

    /// Random search for a pair of states contradicting the asserted `L` or `M`.
    ///
    /// States are drawn from a box of half-width `radius`; the same input `u`
    /// is used for both states of a pair. Returns the first refuting pair, if
    /// any. Passing says nothing about whether the claims are true.
    pub fn falsify_lipschitz(
        &self,
        samples: usize,
        radius: f64,
        seed: u64,
    ) -> Option<LipschitzViolation> {
        let rng = Philox::new(seed);
        let len = self.dims.state_len();
        let d = self.dims.d;
        let draw = |i: u64, block: u32, count: usize| -> Vec<f64> {
            (0..count)
                .map(|c| radius * (2.0 * rng.uniform(i, c as u64, block) - 1.0))
                .collect()
        };
        for i in 0..samples as u64 {
            let x = draw(i, 0, len);
            let y = draw(i, 1, len);
            let u = draw(i, 2, d);
            let dxy = dist(&x, &y);
            if dxy == 0.0 {
                continue;
            }
            let df = dist(&self.drift_vec(&x, &u), &self.drift_vec(&y, &u));
            if df > self.lipschitz_l * dxy * (1.0 + 1e-12) + 1e-12 {
                return Some(LipschitzViolation {
                    constant: "L",
                    ratio: df / dxy,
                    x,
                    y,
                });
            }
            let dg = dist(&self.diffusion_vec(&x), &self.diffusion_vec(&y));
            if dg > self.lipschitz_m * dxy * (1.0 + 1e-12) + 1e-12 {
                return Some(LipschitzViolation {
                    constant: "M",
                    ratio: dg / dxy,
                    x,
                    y,
                });
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzViolation {
    pub constant: &'static str,
    /// Observed difference quotient, larger than the asserted constant.
    pub ratio: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Reference output, the matching state `z*` and equilibrium input `u*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Setpoint {
    pub y_star: Vec<f64>,
    pub z_star: Vec<f64>,
    pub u_star: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumOptions {
    /// Residual target for `|f(z*; u*)|`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 500,
        }
    }
}

/// Solves `f(z*; u) = 0` for the equilibrium input with default options.
pub fn solve_equilibrium(plant: &PlantSpec, y_star: &[f64]) -> Result<Setpoint, ModelError> {
    solve_equilibrium_with(plant, y_star, EquilibriumOptions::default())
}

/// Solves `f(z*; u) = 0`.
///
/// For `d = 1` the root is bracketed by doubling outward from zero and then
/// bisected; monotonicity of `f` in `u` guarantees the sign change. For
/// `d > 1` a damped Newton iteration with a forward-difference Jacobian is
/// used, halving the step until the residual decreases.
pub fn solve_equilibrium_with(
    plant: &PlantSpec,
    y_star: &[f64],
    opts: EquilibriumOptions,
) -> Result<Setpoint, ModelError> {
    let d = plant.dims().d;
    if y_star.len() != d {
        return Err(ModelError::DimensionMismatch {
            what: "setpoint",
            expected: d,
            got: y_star.len(),
        });
    }
    let z_star = plant.setpoint_state(y_star);
    let residual = |u: &[f64]| -> Result<Vec<f64>, ModelError> {
        let r = plant.drift_vec(&z_star, u);
        if r.iter().all(|v| v.is_finite()) {
            Ok(r)
        } else {
            Err(ModelError::NonFinite { u: u.to_vec() })
        }
    };

    let u_star = if d == 1 {
        scalar_root(|u| residual(&[u]).map(|r| r[0]), opts)?
    } else {
        newton_root(residual, d, opts)?
    };
    Ok(Setpoint {
        y_star: y_star.to_vec(),
        z_star,
        u_star,
    })
}

/// Bracket expansion gives up beyond this magnitude of `u`.
const MAX_BRACKET: f64 = 1e100;

fn scalar_root(
    f: impl Fn(f64) -> Result<f64, ModelError>,
    opts: EquilibriumOptions,
) -> Result<Vec<f64>, ModelError> {
    let f0 = f(0.0)?;
    if f0.abs() <= opts.tolerance {
        return Ok(vec![0.0]);
    }
    // f is increasing in u, so the root lies on the side opposite to sign(f(0)).
    let dir = if f0 > 0.0 { -1.0 } else { 1.0 };
    let (mut lo, mut hi) = (0.0_f64, dir);
    let mut iterations = 0;
    while f(hi)?.signum() == f0.signum() {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
        if hi.abs() > MAX_BRACKET {
            return Err(ModelError::NoConvergence {
                iterations,
                residual: f(lo)?.abs(),
            });
        }
    }
    // Bracket [lo, hi] with f(lo) having the sign of f0.
    let mut best = (hi, f(hi)?);
    for _ in 0..opts.max_iterations {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() < best.1.abs() {
            best = (mid, fm);
        }
        if fm.abs() <= opts.tolerance {
            return Ok(vec![mid]);
        }
        if mid == lo || mid == hi {
            break;
        }
        if fm.signum() == f0.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.1.abs() <= opts.tolerance {
        Ok(vec![best.0])
    } else {
        Err(ModelError::NoConvergence {
            iterations: opts.max_iterations,
            residual: best.1.abs(),
        })
    }
}

fn newton_root(
    residual: impl Fn(&[f64]) -> Result<Vec<f64>, ModelError>,
    d: usize,
    opts: EquilibriumOptions,
) -> Result<Vec<f64>, ModelError> {
    let mut u = vec![0.0; d];
    let mut r = residual(&u)?;
    let mut rn = norm(&r);
    for _ in 0..opts.max_iterations {
        if rn <= opts.tolerance {
            return Ok(u);
        }
        let mut jac = crate::linalg::Matrix::zeros(d, d);
        for j in 0..d {
            let h = f64::EPSILON.sqrt() * (1.0 + u[j].abs());
            let mut up = u.clone();
            up[j] += h;
            let rp = residual(&up)?;
            for i in 0..d {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let step = solve_dense(&jac, &r).ok_or(ModelError::NoConvergence {
            iterations: 0,
            residual: rn,
        })?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let rt = residual(&trial)?;
            let rtn = norm(&rt);
            if rtn < rn || t < 1e-12 {
                u = trial;
                r = rt;
                rn = rtn;
                break;
            }
            t *= 0.5;
        }
    }
    if rn <= opts.tolerance {
        Ok(u)
    } else {
        Err(ModelError::NoConvergence {
            iterations: opts.max_iterations,
            residual: rn,
        })
    }
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(a: &crate::linalg::Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))?;
        if m[(piv, col)] == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                let tmp = m[(col, k)];
                m[(col, k)] = m[(piv, k)];
                m[(piv, k)] = tmp;
            }
            x.swap(col, piv);
        }
        for row in (col + 1)..n {
            let factor = m[(row, col)] / m[(col, col)];
            for k in col..n {
                m[(row, k)] -= factor * m[(col, k)];
            }
            x[row] -= factor * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for k in (row + 1)..n {
            acc -= m[(row, k)] * x[k];
        }
        x[row] = acc / m[(row, row)];
    }
    Some(x)
}

/// Shifted coordinates `(y₀, y₁, …, y_n)` in which the extended PID law
/// becomes the linear feedback `u = −Σ k_i y_i + u*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedState {
    /// `n + 1` blocks of length `d`, block 0 being the integral coordinate.
    pub blocks: Vec<Vec<f64>>,
}

impl ShiftedState {
    pub fn n(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.concat()
    }
}

/// Maps a raw state and the controller's error integral to shifted coordinates.
///
/// `error_integral` is the accumulated regulation error `∫(y* − x₁) ds`, as
/// kept by the controller. Then `y₀ = −error_integral + u*/k₀`,
/// `y₁ = x₁ − y*` and `y_i = x_i` for `i ≥ 2`.
pub fn shifted_coordinates(
    x: &[f64],
    error_integral: &[f64],
    sp: &Setpoint,
    k0: f64,
) -> ShiftedState {
    let d = sp.y_star.len();
    assert!(k0 > 0.0, "k0 must be positive");
    assert_eq!(x.len() % d, 0);
    let n = x.len() / d;
    let mut blocks = Vec::with_capacity(n + 1);
    blocks.push(
        error_integral
            .iter()
            .zip(&sp.u_star)
            .map(|(s, u)| -s + u / k0)
            .collect(),
    );
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        if i == 0 {
            blocks.push(xi.iter().zip(&sp.y_star).map(|(a, y)| a - y).collect());
        } else {
            blocks.push(xi.to_vec());
        }
    }
    ShiftedState { blocks }
}

/// Inverse of [`shifted_coordinates`]: returns `(x, error_integral)`.
pub fn unshift(y: &ShiftedState, sp: &Setpoint, k0: f64) -> (Vec<f64>, Vec<f64>) {
    let integral = y.blocks[0]
        .iter()
        .zip(&sp.u_star)
        .map(|(y0, u)| u / k0 - y0)
        .collect();
    let mut x = y.blocks[1..].concat();
    for (xi, ys) in x.iter_mut().zip(&sp.y_star) {
        *xi += ys;
    }
    (x, integral)
}

/// Coordinates `z_i = z_{i−1} + (β₁⋯β_i)·y_i`, `z₀ = y₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZState {
    pub blocks: Vec<Vec<f64>>,
}

impl ZState {
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.concat()
    }

    pub fn from_flat(flat: &[f64], d: usize) -> Self {
        Self {
            blocks: flat.chunks(d).map(<[f64]>::to_vec).collect(),
        }
    }
}

/// Running products `β̂_i = β₁⋯β_i` with `β̂₀ = 1`.
pub fn beta_products(betas: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(betas.len() + 1);
    out.push(1.0);
    let mut acc = 1.0;
    for b in betas {
        acc *= b;
        out.push(acc);
    }
    out
}

fn check_betas(betas: &[f64], blocks: usize) -> Result<(), ModelError> {
    if betas.len() + 1 != blocks {
        return Err(ModelError::DimensionMismatch {
            what: "betas",
            expected: blocks - 1,
            got: betas.len(),
        });
    }
    match betas.iter().position(|b| !(*b > 0.0)) {
        Some(index) => Err(ModelError::DegenerateBeta {
            index,
            value: betas[index],
        }),
        None => Ok(()),
    }
}

pub fn z_transform(y: &ShiftedState, betas: &[f64]) -> Result<ZState, ModelError> {
    check_betas(betas, y.blocks.len())?;
    let hat = beta_products(betas);
    let mut blocks: Vec<Vec<f64>> = Vec::with_capacity(y.blocks.len());
    blocks.push(y.blocks[0].clone());
    for i in 1..y.blocks.len() {
        let block = blocks[i - 1]
            .iter()
            .zip(&y.blocks[i])
            .map(|(prev, yi)| prev + hat[i] * yi)
            .collect();
        blocks.push(block);
    }
    Ok(ZState { blocks })
}

pub fn z_inverse(z: &ZState, betas: &[f64]) -> Result<ShiftedState, ModelError> {
    check_betas(betas, z.blocks.len())?;
    let hat = beta_products(betas);
    let mut blocks = Vec::with_capacity(z.blocks.len());
    blocks.push(z.blocks[0].clone());
    for i in 1..z.blocks.len() {
        blocks.push(
            z.blocks[i]
                .iter()
                .zip(&z.blocks[i - 1])
                .map(|(a, b)| (a - b) / hat[i])
                .collect(),
        );
    }
    Ok(ShiftedState { blocks })
}
