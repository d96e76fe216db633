//! Stability tests for real polynomials.
//!
//! Coefficients are stored in ascending degree, `a₀ + a₁s + … + a_N s^N`.
//! The Routh array decides stability exactly (up to an exact zero pivot,
//! reported as indeterminate). The determining-coefficient test is a cheap
//! sufficient condition for degree five and up.

use serde::Serialize;
use thiserror::Error;

use crate::design::GainVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("polynomial needs degree at least 1 and a nonzero leading coefficient")]
    Degenerate,
    #[error("coefficient a{index} = {value} is not positive")]
    NonPositiveCoefficient { index: usize, value: f64 },
    #[error("determining-coefficient test needs degree {min} or more, got {degree}")]
    DegreeTooLow { degree: usize, min: usize },
    #[error("Routh array has an exact zero pivot in row {row}; stability is indeterminate")]
    Indeterminate { row: usize },
    #[error("leading coefficient must be positive, got {0}")]
    NegativeLeading(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyCoeffs(Vec<f64>);

impl PolyCoeffs {
    /// Ascending coefficients `a₀…a_N` with `N ≥ 1` and `a_N ≠ 0`.
    pub fn new(ascending: Vec<f64>) -> Result<Self, PolyError> {
        match ascending.last() {
            Some(&lead) if ascending.len() >= 2 && lead != 0.0 => Ok(Self(ascending)),
            _ => Err(PolyError::Degenerate),
        }
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    /// Horner evaluation at a complex point `(re, im)`.
    pub fn eval_complex(&self, re: f64, im: f64) -> (f64, f64) {
        let mut acc = (0.0, 0.0);
        for &a in self.0.iter().rev() {
            acc = (acc.0 * re - acc.1 * im + a, acc.0 * im + acc.1 * re);
        }
        acc
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, a| acc * s + a)
    }

    fn require_positive(&self) -> Result<(), PolyError> {
        match self.0.iter().position(|a| !(*a > 0.0)) {
            Some(index) => Err(PolyError::NonPositiveCoefficient {
                index,
                value: self.0[index],
            }),
            None => Ok(()),
        }
    }
}

/// Characteristic polynomial `s^{N+1} + c_N s^N + … + c₀` of the companion
/// matrix built from the stored gains `c₀…c_N`.
pub fn char_coeffs(g: &GainVector) -> PolyCoeffs {
    let mut c = g.as_slice().to_vec();
    c.push(1.0);
    PolyCoeffs(c)
}

/// `α_i = a_{i−1}a_{i+2} / (a_i a_{i+1})` for `i = 1…N−2`.
pub fn determining_coeffs(p: &PolyCoeffs) -> Result<Vec<f64>, PolyError> {
    if p.degree() < 3 {
        return Err(PolyError::DegreeTooLow {
            degree: p.degree(),
            min: 3,
        });
    }
    p.require_positive()?;
    let a = p.coeffs();
    Ok((1..=p.degree() - 2)
        .map(|i| a[i - 1] * a[i + 2] / (a[i] * a[i + 1]))
        .collect())
}

/// Sufficient stability test for positive polynomials of degree `N ≥ 5`:
/// every `α_i < 1/2`, and `α_i + α_{i−1}α_iα_{i+1} ≤ 1/2` for `i = 2…N−3`.
///
/// `false` means the test is inconclusive, not that the polynomial is
/// unstable.
pub fn nie_stable(p: &PolyCoeffs) -> Result<bool, PolyError> {
    if p.degree() < 5 {
        return Err(PolyError::DegreeTooLow {
            degree: p.degree(),
            min: 5,
        });
    }
    let alpha = determining_coeffs(p)?;
    if !alpha.iter().all(|&a| a < 0.5) {
        return Ok(false);
    }
    // alpha[j] holds α_{j+1}.
    let n = p.degree();
    Ok((2..=n - 3).all(|i| alpha[i - 1] + alpha[i - 2] * alpha[i - 1] * alpha[i] <= 0.5))
}

/// First column of the Routh array.
pub fn routh_first_column(p: &PolyCoeffs) -> Result<Vec<f64>, PolyError> {
    let lead = *p.coeffs().last().expect("non-empty");
    if lead < 0.0 {
        return Err(PolyError::NegativeLeading(lead));
    }
    let n = p.degree();
    let desc: Vec<f64> = p.coeffs().iter().rev().copied().collect();
    let width = n / 2 + 1;
    let row_from = |start: usize| -> Vec<f64> {
        (0..width)
            .map(|k| desc.get(start + 2 * k).copied().unwrap_or(0.0))
            .collect()
    };
    let mut prev = row_from(0);
    let mut cur = row_from(1);
    let mut first = vec![prev[0], cur[0]];
    for row in 2..=n {
        if cur[0] == 0.0 {
            return Err(PolyError::Indeterminate { row: row - 1 });
        }
        let next: Vec<f64> = (0..width)
            .map(|k| {
                let a = prev.get(k + 1).copied().unwrap_or(0.0);
                let b = cur.get(k + 1).copied().unwrap_or(0.0);
                (cur[0] * a - prev[0] * b) / cur[0]
            })
            .collect();
        first.push(next[0]);
        prev = cur;
        cur = next;
    }
    Ok(first)
}

/// Routh-Hurwitz test: every root has negative real part.
///
/// A nonpositive coefficient already rules out stability. An exact zero in
/// the first column is returned as [`PolyError::Indeterminate`].
pub fn routh_hurwitz(p: &PolyCoeffs) -> Result<bool, PolyError> {
    let lead = *p.coeffs().last().expect("non-empty");
    if lead < 0.0 {
        return Err(PolyError::NegativeLeading(lead));
    }
    if p.coeffs().iter().any(|a| !(*a > 0.0)) {
        return Ok(false);
    }
    let column = routh_first_column(p)?;
    Ok(column.iter().all(|&c| c > 0.0))
}

/// Closed-form Hurwitz conditions for degree ≤ 4 (coefficients positive).
///
/// Degree 3: `a₂a₁ > a₀a₃`. Degree 4: `a₃a₂a₁ − a₄a₁² − a₀a₃² > 0`.
pub fn hurwitz_closed_form(p: &PolyCoeffs) -> Option<bool> {
    let a = p.coeffs();
    if a.iter().any(|c| !(*c > 0.0)) {
        return Some(false);
    }
    match p.degree() {
        1 | 2 => Some(true),
        3 => Some(a[2] * a[1] > a[0] * a[3]),
        4 => Some(quartic_hurwitz_expression(p) > 0.0),
        _ => None,
    }
}

/// `a₃a₂a₁ − a₄a₁² − a₀a₃²` for a quartic.
pub fn quartic_hurwitz_expression(p: &PolyCoeffs) -> f64 {
    assert_eq!(p.degree(), 4);
    let a = p.coeffs();
    a[3] * a[2] * a[1] - a[4] * a[1] * a[1] - a[0] * a[3] * a[3]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HurwitzRoute {
    ClosedForm,
    Determining,
    Routh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HurwitzVerdict {
    pub stable: bool,
    pub route: HurwitzRoute,
}

/// Whether the companion matrix of `g` is Hurwitz.
pub fn is_hurwitz(g: &GainVector) -> Result<bool, PolyError> {
    polynomial_hurwitz(&char_coeffs(g)).map(|v| v.stable)
}

/// Dispatching stability test: closed forms up to degree 4, then the
/// determining-coefficient test, falling back to the Routh array when that
/// test is inconclusive.
pub fn polynomial_hurwitz(p: &PolyCoeffs) -> Result<HurwitzVerdict, PolyError> {
    if let Some(stable) = hurwitz_closed_form(p) {
        return Ok(HurwitzVerdict {
            stable,
            route: HurwitzRoute::ClosedForm,
        });
    }
    if p.coeffs().iter().all(|a| *a > 0.0) && nie_stable(p)? {
        return Ok(HurwitzVerdict {
            stable: true,
            route: HurwitzRoute::Determining,
        });
    }
    Ok(HurwitzVerdict {
        stable: routh_hurwitz(p)?,
        route: HurwitzRoute::Routh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::sec6_pattern;

    fn poly(a: &[f64]) -> PolyCoeffs {
        PolyCoeffs::new(a.to_vec()).unwrap()
    }

    #[test]
    fn char_coeffs_examples() {
        assert_eq!(
            char_coeffs(&sec6_pattern(8.6).unwrap()).coeffs(),
            &[8.6, 21.5, 21.5, 8.6, 1.0]
        );
        assert_eq!(
            char_coeffs(&GainVector::pid([2.0, 3.0]).unwrap()).coeffs(),
            &[2.0, 3.0, 1.0]
        );
    }

    #[test]
    fn determining_examples() {
        for deg in 3..8 {
            let ones = poly(&vec![1.0; deg + 1]);
            assert!(determining_coeffs(&ones).unwrap().iter().all(|&a| a == 1.0));
        }
        let p = poly(&(0..=5).map(|i| 0.6f64.powi(i * i)).collect::<Vec<_>>());
        for a in determining_coeffs(&p).unwrap() {
            assert!((a - 0.1296).abs() < 1e-12);
        }
        let q = determining_coeffs(&poly(&[8.6, 21.5, 21.5, 8.6, 1.0])).unwrap();
        assert!((q[0] - 8.6 * 8.6 / (21.5 * 21.5)).abs() < 1e-15);
        assert!((q[0] - 0.16).abs() < 1e-12);
        assert!((q[1] - 21.5 / (21.5 * 8.6)).abs() < 1e-15);
        assert!(matches!(
            determining_coeffs(&poly(&[1.0, 0.0, 1.0, 1.0])),
            Err(PolyError::NonPositiveCoefficient { index: 1, .. })
        ));
    }

    #[test]
    fn nie_examples() {
        let p = poly(&(0..=5).map(|i| 0.6f64.powi(i * i)).collect::<Vec<_>>());
        assert!(nie_stable(&p).unwrap());
        assert!(routh_hurwitz(&p).unwrap());
        assert!(!nie_stable(&poly(&[1.0; 6])).unwrap());
        assert!(matches!(
            nie_stable(&poly(&[1.0; 5])),
            Err(PolyError::DegreeTooLow { degree: 4, min: 5 })
        ));
    }

    #[test]
    fn routh_examples() {
        let q = poly(&[8.6, 21.5, 21.5, 8.6, 1.0]);
        assert!(routh_hurwitz(&q).unwrap());
        assert!((quartic_hurwitz_expression(&q) - 2877.0439999999995).abs() < 1e-9);
        assert!(routh_hurwitz(&poly(&[2.0, 0.5, 1.0])).unwrap());
        // s³ + s² + s + 2
        assert!(!routh_hurwitz(&poly(&[2.0, 1.0, 1.0, 1.0])).unwrap());
        assert_eq!(
            hurwitz_closed_form(&poly(&[2.0, 1.0, 1.0, 1.0])),
            Some(false)
        );
        // s³ + s² + s + 1 has roots ±i: exact zero pivot.
        assert_eq!(
            routh_hurwitz(&poly(&[1.0, 1.0, 1.0, 1.0])),
            Err(PolyError::Indeterminate { row: 2 })
        );
        assert!(!routh_hurwitz(&poly(&[1.0, -1.0, 1.0])).unwrap());
        assert!(matches!(
            routh_hurwitz(&poly(&[1.0, 1.0, -1.0])),
            Err(PolyError::NegativeLeading(_))
        ));
    }

    #[test]
    fn routh_first_column_known_cubic() {
        // s³ + 6s² + 11s + 6 = (s+1)(s+2)(s+3)
        let col = routh_first_column(&poly(&[6.0, 11.0, 6.0, 1.0])).unwrap();
        assert_eq!(col, vec![1.0, 6.0, 10.0, 6.0]);
    }

    #[test]
    fn dispatch_routes() {
        let g = sec6_pattern(8.6).unwrap();
        assert!(is_hurwitz(&g).unwrap());
        assert_eq!(
            polynomial_hurwitz(&char_coeffs(&g)).unwrap().route,
            HurwitzRoute::ClosedForm
        );
        let p = poly(&(0..=6).map(|i| 0.6f64.powi(i * i)).collect::<Vec<_>>());
        assert_eq!(
            polynomial_hurwitz(&p).unwrap(),
            HurwitzVerdict {
                stable: true,
                route: HurwitzRoute::Determining
            }
        );
        let v = polynomial_hurwitz(&poly(&[1.0, 1.0, 1.0, 3.0, 2.0, 1.0])).unwrap();
        assert_eq!(v.route, HurwitzRoute::Routh);
        assert!(!v.stable);
        assert_eq!(
            polynomial_hurwitz(&poly(&[1.0; 6])),
            Err(PolyError::Indeterminate { row: 2 })
        );
        for k in [0.1, 1.0, 50.0] {
            assert!(is_hurwitz(&GainVector::pid([k, 2.0 * k]).unwrap()).unwrap());
        }
    }
}
