//! Gain vectors, the quadratic admissibility inequality, closed-form design
//! rules, and the explicit constants of the tracking-error bounds.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lyapunov::LyapunovCertificate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainKind {
    /// Extended PID, gains `k₀…k_n`.
    Pid,
    /// Extended PD, gains `k₁…k_n`.
    Pd,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("gain {name} must be positive and finite, got {value}")]
    NonPositiveGain { name: String, value: f64 },
    #[error("a {kind:?} gain vector needs at least {min} entries, got {got}")]
    TooFewGains {
        kind: GainKind,
        min: usize,
        got: usize,
    },
    #[error("expected {expected:?} gains, got {got:?}")]
    WrongKind { expected: GainKind, got: GainKind },
    #[error("beta[{index}] = {value} violates 0 < beta < {bound}")]
    InvalidBeta {
        index: usize,
        value: f64,
        bound: f64,
    },
    #[error("k = {value} must exceed {bound}")]
    InvalidScale { value: f64, bound: f64 },
    #[error("{name} must be {requirement}, got {value}")]
    BadParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("relative degree must be at least 1")]
    ZeroDegree,
}

/// Extended PID (`k₀…k_n`) or PD (`k₁…k_n`) gains.
///
/// Gains are stored in ascending index order; for PD the first stored entry
/// is `k₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GainFile", into = "GainFile")]
pub struct GainVector {
    kind: GainKind,
    gains: Vec<f64>,
}

/// On-disk form of a gain vector: `{"kind": "pid", "gains": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainFile {
    pub kind: GainKind,
    pub gains: Vec<f64>,
}

impl TryFrom<GainFile> for GainVector {
    type Error = DesignError;

    fn try_from(file: GainFile) -> Result<Self, DesignError> {
        GainVector::new(file.kind, file.gains)
    }
}

impl From<GainVector> for GainFile {
    fn from(g: GainVector) -> Self {
        GainFile {
            kind: g.kind,
            gains: g.gains,
        }
    }
}

impl GainVector {
    pub fn new(kind: GainKind, gains: Vec<f64>) -> Result<Self, DesignError> {
        let min = match kind {
            GainKind::Pid => 2,
            GainKind::Pd => 1,
        };
        if gains.len() < min {
            return Err(DesignError::TooFewGains {
                kind,
                min,
                got: gains.len(),
            });
        }
        let offset = usize::from(kind == GainKind::Pd);
        if let Some(i) = gains.iter().position(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(DesignError::NonPositiveGain {
                name: format!("k{}", i + offset),
                value: gains[i],
            });
        }
        Ok(Self { kind, gains })
    }

    pub fn pid(gains: impl Into<Vec<f64>>) -> Result<Self, DesignError> {
        Self::new(GainKind::Pid, gains.into())
    }

    pub fn pd(gains: impl Into<Vec<f64>>) -> Result<Self, DesignError> {
        Self::new(GainKind::Pd, gains.into())
    }

    pub fn kind(&self) -> GainKind {
        self.kind
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gains
    }

    /// Relative degree the gains are meant for.
    pub fn n(&self) -> usize {
        match self.kind {
            GainKind::Pid => self.gains.len() - 1,
            GainKind::Pd => self.gains.len(),
        }
    }

    /// `k_i` by its mathematical index. Panics on `k₀` of a PD vector.
    pub fn k(&self, i: usize) -> f64 {
        match self.kind {
            GainKind::Pid => self.gains[i],
            GainKind::Pd => self.gains[i.checked_sub(1).expect("PD gains start at k1")],
        }
    }

    /// Index of the first stored gain (0 for PID, 1 for PD).
    pub fn first_index(&self) -> usize {
        match self.kind {
            GainKind::Pid => 0,
            GainKind::Pd => 1,
        }
    }

    /// `k̄ = Σ k_i L + k_n M²` (PID) or `k̂ = Σ_{i≥1} k_i L + k_n M²` (PD).
    pub fn aggregate_disturbance(&self, l: f64, m: f64) -> f64 {
        self.gains.iter().sum::<f64>() * l + self.k(self.n()) * m * m
    }

    pub fn sum_squares(&self) -> f64 {
        self.gains.iter().map(|k| k * k).sum()
    }

    fn require(&self, kind: GainKind) -> Result<(), DesignError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(DesignError::WrongKind {
                expected: kind,
                got: self.kind,
            })
        }
    }
}

impl fmt::Display for GainVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            GainKind::Pid => "PID",
            GainKind::Pd => "PD",
        };
        write!(f, "{kind}(")?;
        for (i, k) in self.gains.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// One left-hand term of the admissibility inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityTerm {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub admissible: bool,
    /// The smallest left-hand term.
    pub binding_term: InequalityTerm,
    /// `k̄` (or `k̂` for PD gains).
    pub kbar: f64,
    /// `binding_term.value − kbar`; admissible exactly when positive.
    pub margin: f64,
    pub terms: Vec<InequalityTerm>,
}

impl DesignReport {
    fn from_terms(terms: Vec<InequalityTerm>, kbar: f64) -> Self {
        let binding_term = terms
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .cloned()
            .expect("at least one inequality term");
        let margin = binding_term.value - kbar;
        Self {
            // NaN margins are not admissible either.
            admissible: margin > 0.0,
            binding_term,
            kbar,
            margin,
            terms,
        }
    }
}

fn check_constants(l: f64, m: f64) -> Result<(), DesignError> {
    if !(l >= 0.0 && l.is_finite()) {
        return Err(DesignError::BadParameter {
            name: "L",
            requirement: "finite and nonnegative",
            value: l,
        });
    }
    if !(m >= 0.0 && m.is_finite()) {
        return Err(DesignError::BadParameter {
            name: "M",
            requirement: "finite and nonnegative",
            value: m,
        });
    }
    Ok(())
}

/// Evaluates the sufficient admissibility condition for extended PID gains:
///
/// ```text
/// min{ k₀² b̲,  (k_{i−1}² − 2k_{i−2}k_i) b̲ for 2 ≤ i ≤ n,  k_n² b̲ − k_{n−1} }  >  Σ k_i L + k_n M²
/// ```
///
/// For `n = 1` the middle family is empty. A zero margin is a failure.
pub fn check_inequality(
    g: &GainVector,
    l: f64,
    m: f64,
    b_lower: f64,
) -> Result<DesignReport, DesignError> {
    g.require(GainKind::Pid)?;
    check_constants(l, m)?;
    if !(b_lower > 0.0 && b_lower.is_finite()) {
        return Err(DesignError::BadParameter {
            name: "b_lower",
            requirement: "finite and positive",
            value: b_lower,
        });
    }
    let n = g.n();
    let k = |i: usize| g.k(i);
    let mut terms = Vec::with_capacity(n + 1);
    terms.push(InequalityTerm {
        name: "k0^2".into(),
        value: k(0) * k(0) * b_lower,
    });
    for i in 2..=n {
        terms.push(InequalityTerm {
            name: format!("k{}^2-2k{}k{}", i - 1, i - 2, i),
            value: (k(i - 1) * k(i - 1) - 2.0 * k(i - 2) * k(i)) * b_lower,
        });
    }
    terms.push(InequalityTerm {
        name: format!("k{n}^2-k{}", n - 1),
        value: k(n) * k(n) * b_lower - k(n - 1),
    });
    Ok(DesignReport::from_terms(
        terms,
        g.aggregate_disturbance(l, m),
    ))
}

/// Admissibility condition for extended PD gains `k₁…k_n`:
///
/// ```text
/// min{ k₁²,  k_i² − 2k_{i−1}k_{i+1} for 2 ≤ i ≤ n−1,  k_n² − k_{n−1} }  >  Σ_{i≥1} k_i L + k_n M²
/// ```
///
/// For `n = 1` only `k₁²` remains.
pub fn check_inequality_pd(g: &GainVector, l: f64, m: f64) -> Result<DesignReport, DesignError> {
    g.require(GainKind::Pd)?;
    check_constants(l, m)?;
    let n = g.n();
    let k = |i: usize| g.k(i);
    let mut terms = vec![InequalityTerm {
        name: "k1^2".into(),
        value: k(1) * k(1),
    }];
    for i in 2..n {
        terms.push(InequalityTerm {
            name: format!("k{i}^2-2k{}k{}", i - 1, i + 1),
            value: k(i) * k(i) - 2.0 * k(i - 1) * k(i + 1),
        });
    }
    if n >= 2 {
        terms.push(InequalityTerm {
            name: format!("k{n}^2-k{}", n - 1),
            value: k(n) * k(n) - k(n - 1),
        });
    }
    Ok(DesignReport::from_terms(
        terms,
        g.aggregate_disturbance(l, m),
    ))
}

/// Either check, chosen by the kind of `g` (`b_lower` is ignored for PD).
pub fn check_gains(
    g: &GainVector,
    l: f64,
    m: f64,
    b_lower: f64,
) -> Result<DesignReport, DesignError> {
    match g.kind() {
        GainKind::Pid => check_inequality(g, l, m, b_lower),
        GainKind::Pd => check_inequality_pd(g, l, m),
    }
}

/// `k₀ = k`, `k_i = 3^{−i(i+1)/2} k`. Admissible for every large enough `k`.
pub fn geometric_gains(k: f64, n: usize) -> Result<GainVector, DesignError> {
    if n == 0 {
        return Err(DesignError::ZeroDegree);
    }
    let gains = (0..=n)
        .map(|i| k * 3f64.powi(-((i * (i + 1) / 2) as i32)))
        .collect::<Vec<_>>();
    GainVector::pid(gains)
}

/// Scale a stored gain pattern by `k`: the `k₀ = k₃ = k`, `k₁ = k₂ = 2.5k`
/// family used for third-order plants.
pub fn sec6_pattern(k: f64) -> Result<GainVector, DesignError> {
    GainVector::pid(vec![k, 2.5 * k, 2.5 * k, k])
}

/// Optional user choices inside the open design region.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LambdaOverrides {
    pub betas: Option<Vec<f64>>,
    pub k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaDesign {
    pub gains: GainVector,
    pub betas: Vec<f64>,
    pub k: f64,
    /// The open lower bound `k` had to exceed.
    pub k_bound: f64,
}

const BETA_SAFETY: f64 = 0.9;
const SCALE_SAFETY: f64 = 1.1;
/// Relative band around the open bounds inside which an override counts as
/// sitting on the boundary.
const BOUNDARY_BAND: f64 = 8.0 * f64::EPSILON;

/// Decay-rate design: `k₀ = k`, `k_i = (β₁⋯β_i) k` with
///
/// ```text
/// 0 < β₁ < min(1, 1/(n(λ + 8M²)))
/// 0 < β_i < β_{i−1}/n                       (2 ≤ i ≤ n)
/// k > (β₁⋯β_n)^{−2} (1 + 3L + 2L²/(λ + 8M²)) / b̲
/// ```
///
/// Unspecified values default to 0.9 of the β bounds. The default `k` is 1.1
/// times the larger of the bound above and
/// `(β̂_{n−1} + 3L + β̂_n M²)/(β̂_n² b̲)`, which makes the gains pass
/// [`check_inequality`]; the first bound alone does not when `n = 1`, `L = 0`
/// and `M > 0`. Overrides within round-off of a bound are rejected.
pub fn lambda_gains(
    lambda: f64,
    l: f64,
    m: f64,
    n: usize,
    b_lower: f64,
    overrides: &LambdaOverrides,
) -> Result<LambdaDesign, DesignError> {
    if n == 0 {
        return Err(DesignError::ZeroDegree);
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(DesignError::BadParameter {
            name: "lambda",
            requirement: "finite and positive",
            value: lambda,
        });
    }
    check_constants(l, m)?;
    if !(b_lower > 0.0 && b_lower.is_finite()) {
        return Err(DesignError::BadParameter {
            name: "b_lower",
            requirement: "finite and positive",
            value: b_lower,
        });
    }
    let rate = lambda + 8.0 * m * m;
    let nf = n as f64;

    let betas = match &overrides.betas {
        Some(betas) => {
            if betas.len() != n {
                return Err(DesignError::InvalidBeta {
                    index: betas.len().min(n),
                    value: f64::NAN,
                    bound: f64::NAN,
                });
            }
            for (i, &b) in betas.iter().enumerate() {
                let bound = if i == 0 {
                    (1.0 / (nf * rate)).min(1.0)
                } else {
                    betas[i - 1] / nf
                };
                if !(b > 0.0 && b < bound * (1.0 - BOUNDARY_BAND)) {
                    return Err(DesignError::InvalidBeta {
                        index: i,
                        value: b,
                        bound,
                    });
                }
            }
            betas.clone()
        }
        None => {
            let mut betas = Vec::with_capacity(n);
            betas.push(BETA_SAFETY * (1.0 / (nf * rate)).min(1.0));
            for i in 1..n {
                betas.push(BETA_SAFETY * betas[i - 1] / nf);
            }
            betas
        }
    };

    let hat_n: f64 = betas.iter().product();
    let k_bound = (1.0 + 3.0 * l + 2.0 * l * l / rate) / (hat_n * hat_n) / b_lower;
    let k = match overrides.k {
        Some(k) => {
            if !(k.is_finite() && k > k_bound * (1.0 + BOUNDARY_BAND)) {
                return Err(DesignError::InvalidScale {
                    value: k,
                    bound: k_bound,
                });
            }
            k
        }
        None => {
            let hat_prev: f64 = betas[..n - 1].iter().product();
            let sufficient = (hat_prev + 3.0 * l + hat_n * m * m) / (hat_n * hat_n) / b_lower;
            SCALE_SAFETY * k_bound.max(sufficient)
        }
    };

    let mut gains = Vec::with_capacity(n + 1);
    gains.push(k);
    let mut hat = 1.0;
    for b in &betas {
        hat *= b;
        gains.push(hat * k);
    }
    Ok(LambdaDesign {
        gains: GainVector::pid(gains)?,
        betas,
        k,
        k_bound,
    })
}

/// Explicit constants of the tracking-error bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// `4n³k₀²/k_n²`, multiplies `(|x(0)−z*|² + |u*|²) e^{−λt}`.
    pub thm3_coeff_exp: f64,
    /// `4n/λ`, multiplies `‖g(z*)‖²_HS`.
    pub thm3_coeff_ss: f64,
    pub lambda: f64,
    /// Lower-bound coefficient `λ / [4(2+2L+M²)λ + 64(n+1)R² Σk_i²]`.
    pub c3: f64,
    pub prop1: Option<CertificateBound>,
}

/// Decay bound read off a Lyapunov certificate `(P, Q)`.
///
/// With `V = ½ Yᵀ P Y` and `μ = λ_min(Q − 2k̄I)` the generator satisfies
/// `LV ≤ −(μ/λ_max(P)) V + k_n ‖g(z*)‖²`, which gives
/// `E|x − z*|² ≤ c1 (|x(0)−z*|² + |u*|²) e^{−rate·t} + c2 ‖g(z*)‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateBound {
    pub c1: f64,
    pub c2: f64,
    pub rate: f64,
}

impl CertificateBound {
    /// `None` for PD certificates, whose bound also involves `f(z*; 0)`.
    pub fn from_certificate(cert: &LyapunovCertificate) -> Option<Self> {
        if cert.kind != GainKind::Pid {
            return None;
        }
        let lmin = cert.min_eig_p;
        let lmax = cert.max_eig_p;
        let mu = cert.min_eig_negdef;
        let k0 = cert.gains[0];
        let kn = *cert.gains.last()?;
        Some(Self {
            c1: lmax / lmin * (1.0f64).max(1.0 / (k0 * k0)),
            c2: 2.0 * kn * lmax / (mu * lmin),
            rate: mu / lmax,
        })
    }
}

pub fn bound_constants(
    g: &GainVector,
    lambda: f64,
    l: f64,
    m: f64,
    r: f64,
) -> Result<BoundConstants, DesignError> {
    g.require(GainKind::Pid)?;
    if !(lambda > 0.0) {
        return Err(DesignError::BadParameter {
            name: "lambda",
            requirement: "positive",
            value: lambda,
        });
    }
    let n = g.n() as f64;
    let k0 = g.k(0);
    let kn = g.k(g.n());
    let c3 = lambda
        / (4.0 * (2.0 + 2.0 * l + m * m) * lambda + 64.0 * (n + 1.0) * r * r * g.sum_squares());
    Ok(BoundConstants {
        thm3_coeff_exp: 4.0 * n.powi(3) * k0 * k0 / (kn * kn),
        thm3_coeff_ss: 4.0 * n / lambda,
        lambda,
        c3,
        prop1: None,
    })
}

impl BoundConstants {
    pub fn with_certificate(mut self, cert: &LyapunovCertificate) -> Self {
        self.prop1 = CertificateBound::from_certificate(cert);
        self
    }
}
