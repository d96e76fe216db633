use serde::{Deserialize, Serialize};

use crate::design::{GainKind, GainVector};
use crate::linalg::Matrix;
use crate::model::{beta_products, z_inverse, ModelError, PlantSpec, Setpoint, ZState};
use crate::rng::Philox;

/// Drift of the closed loop in `z`-coordinates under `u = −Σ k_i y_i + u*`.
///
/// `z` holds `n + 1` blocks of length `d`. With `β̂` the running products of
/// `betas`, `dz_i = Σ_{j≤i} β̂_j dy_j`, where `dy_i = y_{i+1}` for `i < n` and
/// `dy_n = f(z* + y; u)`.
pub fn z_drift(
    plant: &PlantSpec,
    sp: &Setpoint,
    g: &GainVector,
    betas: &[f64],
    z: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let dims = plant.dims();
    let (n, d) = (dims.n, dims.d);
    if g.kind() != GainKind::Pid || g.n() != n {
        return Err(ModelError::DimensionMismatch {
            what: "PID gains",
            expected: n + 1,
            got: g.as_slice().len(),
        });
    }
    if z.len() != (n + 1) * d {
        return Err(ModelError::DimensionMismatch {
            what: "z",
            expected: (n + 1) * d,
            got: z.len(),
        });
    }
    let y = z_inverse(&ZState::from_flat(z, d), betas)?;
    let hat = beta_products(betas);

    let mut x = sp.z_star.clone();
    for i in 1..=n {
        for c in 0..d {
            x[(i - 1) * d + c] += y.blocks[i][c];
        }
    }
    let mut u = sp.u_star.clone();
    for i in 0..=n {
        for c in 0..d {
            u[c] -= g.k(i) * y.blocks[i][c];
        }
    }
    let f = plant.drift_vec(&x, &u);

    let mut out = vec![0.0; (n + 1) * d];
    let mut acc = vec![0.0; d];
    for i in 0..=n {
        let dy = if i < n { &y.blocks[i + 1] } else { &f };
        for c in 0..d {
            acc[c] += hat[i] * dy[c];
            out[i * d + c] = acc[c];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub samples: usize,
    /// Largest `(zᵀb(z) + ((λ + 8M²)/2)|z|²) / |z|²` seen.
    pub worst_ratio: f64,
    pub worst_point: Vec<f64>,
    /// Points whose margin is positive beyond round-off.
    pub violations: usize,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Samples points uniformly on the spheres `|z| = radius` and `|z| = 10·radius`
/// and evaluates the dissipativity margin
/// `zᵀb(z) + ((λ + 8M²)/2)|z|²`, which should never be positive.
pub fn dissipativity_probe(
    plant: &PlantSpec,
    sp: &Setpoint,
    g: &GainVector,
    betas: &[f64],
    lambda: f64,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<ProbeReport, ModelError> {
    let dims = plant.dims();
    let len = (dims.n + 1) * dims.d;
    let m = plant.lipschitz_m();
    let half = (lambda + 8.0 * m * m) / 2.0;
    let rng = Philox::new(seed);
    let mut report = ProbeReport {
        samples,
        worst_ratio: f64::NEG_INFINITY,
        worst_point: Vec::new(),
        violations: 0,
    };
    let mut z = vec![0.0; len];
    for s in 0..samples {
        rng.fill_normals(s as u64, 0, &mut z);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = if s % 2 == 0 { radius } else { 10.0 * radius };
        for v in z.iter_mut() {
            *v *= r / norm;
        }
        let b = z_drift(plant, sp, g, betas, &z)?;
        let zz = r * r;
        let zb: f64 = z.iter().zip(&b).map(|(a, b)| a * b).sum();
        let margin = zb + half * zz;
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = margin / zz;
        if ratio > report.worst_ratio {
            report.worst_ratio = ratio;
            report.worst_point = z.clone();
        }
        if margin > 1e-9 * (r * b_norm + half * zz) {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Generator of `V(x) = xᵀVx` along `dx = b dt + σ dB`:
/// `LV = 2xᵀVb + tr(σᵀVσ)`, with `V` replaced by its symmetric part.
pub fn generator_eval(v: &Matrix, b: &[f64], sigma: &Matrix, x: &[f64]) -> Result<f64, ModelError> {
    let n = x.len();
    let mismatch = |what, got| ModelError::DimensionMismatch {
        what,
        expected: n,
        got,
    };
    if v.rows() != n || v.cols() != n {
        return Err(mismatch("V rows", v.rows()));
    }
    if b.len() != n {
        return Err(mismatch("drift", b.len()));
    }
    if sigma.rows() != n {
        return Err(mismatch("sigma rows", sigma.rows()));
    }
    let sym = |i: usize, j: usize| 0.5 * (v[(i, j)] + v[(j, i)]);
    let mut first = 0.0;
    for i in 0..n {
        for j in 0..n {
            first += x[i] * sym(i, j) * b[j];
        }
    }
    let mut second = 0.0;
    for k in 0..sigma.cols() {
        for i in 0..n {
            for j in 0..n {
                second += sigma[(i, k)] * sym(i, j) * sigma[(j, k)];
            }
        }
    }
    Ok(2.0 * first + second)
}
