//! Lyapunov certificates for the closed loop in shifted coordinates.
//!
//! For gains `c₀…c_N` (the PID vector `k₀…k_n`, or the PD vector `k₁…k_n`)
//! the matrix `P` is built so that its last column equals the gains and
//! `PA + AᵀP` is diagonal, `A` being the companion matrix of the gains. The
//! entries follow the recursion
//!
//! ```text
//! p₀ⱼ = 2c₀c_{j+1}            (j < N),   p₀_N = c₀
//! pᵢⱼ = 2cᵢc_{j+1} − p_{i−1,j+1}   (i ≤ j < N),   pᵢ_N = cᵢ
//! ```
//!
//! and `Q = −(PA + AᵀP) = diag(2c₀², 2(cᵢ² − p_{i−1,i}))`.

use serde::Serialize;
use thiserror::Error;

use crate::design::{GainKind, GainVector};
use crate::linalg::{symmetric_eigen, Matrix};

/// Companion matrix: ones on the superdiagonal, negated gains on the last row.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionMatrix(pub Matrix);

impl CompanionMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.rows()
    }
}

pub fn companion(g: &GainVector) -> CompanionMatrix {
    companion_of(g.as_slice())
}

fn companion_of(c: &[f64]) -> CompanionMatrix {
    let size = c.len();
    let mut a = Matrix::zeros(size, size);
    for i in 0..size - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for (j, cj) in c.iter().enumerate() {
        a[(size - 1, j)] = -cj;
    }
    CompanionMatrix(a)
}

fn diagonalizing_matrix(c: &[f64]) -> Matrix {
    let last = c.len() - 1;
    let mut p = Matrix::zeros(c.len(), c.len());
    for i in 0..=last {
        for j in i..last {
            p[(i, j)] = if i == 0 {
                2.0 * c[0] * c[j + 1]
            } else {
                2.0 * c[i] * c[j + 1] - p[(i - 1, j + 1)]
            };
        }
        p[(i, last)] = c[i];
    }
    for i in 0..=last {
        for j in 0..i {
            p[(i, j)] = p[(j, i)];
        }
    }
    p
}

/// The Lyapunov matrix `P` for extended PID gains.
pub fn build_p(g: &GainVector) -> Matrix {
    assert_eq!(g.kind(), GainKind::Pid, "build_p expects PID gains");
    diagonalizing_matrix(g.as_slice())
}

/// The Lyapunov matrix `P₀` for extended PD gains (`k₁…k_n`).
pub fn build_p0(g: &GainVector) -> Matrix {
    assert_eq!(g.kind(), GainKind::Pd, "build_p0 expects PD gains");
    diagonalizing_matrix(g.as_slice())
}

/// `P` or `P₀` depending on the kind of `g`.
pub fn lyapunov_matrix(g: &GainVector) -> Matrix {
    diagonalizing_matrix(g.as_slice())
}

/// Diagonal of `Q = −(PA + AᵀP)`.
pub fn q_diagonal(g: &GainVector) -> Vec<f64> {
    let c = g.as_slice();
    let p = diagonalizing_matrix(c);
    let mut q = Vec::with_capacity(c.len());
    q.push(2.0 * c[0] * c[0]);
    for i in 1..c.len() {
        q.push(2.0 * (c[i] * c[i] - p[(i - 1, i)]));
    }
    q
}

/// `PA + AᵀP` evaluated by matrix products.
pub fn lyapunov_form(p: &Matrix, a: &CompanionMatrix) -> Matrix {
    let pa = p * a.matrix();
    pa.add(&pa.transpose())
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovCertificate {
    pub kind: GainKind,
    pub gains: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    /// Diagonal of `Q = −(PA + AᵀP)`.
    pub q: Vec<f64>,
    pub min_eig_p: f64,
    pub max_eig_p: f64,
    /// Smallest eigenvalue of `−(PA + AᵀP + 2k̄I)`.
    pub min_eig_negdef: f64,
    pub kbar: f64,
    /// Largest off-diagonal entry of the computed `PA + AᵀP`.
    pub offdiag_residue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Error)]
pub enum Violation {
    #[error("P is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("PA + AᵀP + 2k̄I is not negative definite (max eigenvalue {max_eig:e})")]
    NotNegativeDefinite { max_eig: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[error("certificate rejected: {}", .violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct Rejection {
    pub violations: Vec<Violation>,
    pub min_eig_p: f64,
    pub max_eig_form: f64,
    pub kbar: f64,
}

impl Rejection {
    pub fn not_positive_definite(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, Violation::NotPositiveDefinite { .. }))
    }

    pub fn not_negative_definite(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, Violation::NotNegativeDefinite { .. }))
    }
}

/// Checks `P ≻ 0` and `PA + AᵀP + 2k̄I ≺ 0` by symmetric eigenvalues.
///
/// `k̄` is `Σk_iL + k_nM²` over the stored gains, so PD vectors are checked
/// against `k̂`. Both conditions are always evaluated and every failed one is
/// reported.
pub fn verify_certificate(
    g: &GainVector,
    l: f64,
    m: f64,
) -> Result<LyapunovCertificate, Rejection> {
    let p = lyapunov_matrix(g);
    let a = companion(g);
    let form = lyapunov_form(&p, &a);
    let kbar = g.aggregate_disturbance(l, m);
    let size = p.rows();
    let shifted = form.add(&Matrix::identity(size).scale(2.0 * kbar));

    let eig_p = symmetric_eigen(&p);
    let eig_form = symmetric_eigen(&shifted);

    let mut violations = Vec::new();
    if !(eig_p.min() > 0.0) {
        violations.push(Violation::NotPositiveDefinite {
            min_eig: eig_p.min(),
        });
    }
    if !(eig_form.max() < 0.0) {
        violations.push(Violation::NotNegativeDefinite {
            max_eig: eig_form.max(),
        });
    }
    if !violations.is_empty() {
        return Err(Rejection {
            violations,
            min_eig_p: eig_p.min(),
            max_eig_form: eig_form.max(),
            kbar,
        });
    }
    Ok(LyapunovCertificate {
        kind: g.kind(),
        gains: g.as_slice().to_vec(),
        p: (0..size).map(|i| p.row(i).to_vec()).collect(),
        q: q_diagonal(g),
        min_eig_p: eig_p.min(),
        max_eig_p: eig_p.max(),
        min_eig_negdef: -eig_form.max(),
        kbar,
        offdiag_residue: form.max_offdiag(),
    })
}
