use expid::lyapunov::companion;
use expid::poly::{
    char_coeffs, nie_stable, polynomial_hurwitz, routh_hurwitz, PolyCoeffs, PolyError,
};
use expid::rng::Philox;
use expid::GainVector;
use nalgebra::DMatrix;

const BAND: f64 = 1e-8;

#[derive(Debug, PartialEq)]
enum Oracle {
    Stable,
    Unstable,
    Indeterminate,
}

/// Largest real part among the roots, via eigenvalues of the companion matrix.
fn oracle(p: &PolyCoeffs) -> Oracle {
    let a = p.coeffs();
    let deg = p.degree();
    let lead = a[deg];
    let m = DMatrix::from_fn(deg, deg, |i, j| {
        if i + 1 == j {
            1.0
        } else if i == deg - 1 {
            -a[j] / lead
        } else {
            0.0
        }
    });
    let max_re = m
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_re < -BAND {
        Oracle::Stable
    } else if max_re > BAND {
        Oracle::Unstable
    } else {
        Oracle::Indeterminate
    }
}

fn from_roots(real: &[f64], pairs: &[(f64, f64)]) -> Vec<f64> {
    let mut c = vec![1.0];
    let mut mul = |f: &[f64]| {
        let mut out = vec![0.0; c.len() + f.len() - 1];
        for (i, a) in c.iter().enumerate() {
            for (j, b) in f.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        c = out;
    };
    for &r in real {
        mul(&[-r, 1.0]);
    }
    for &(re, im) in pairs {
        mul(&[re * re + im * im, -2.0 * re, 1.0]);
    }
    c
}

fn random_polys(count: usize) -> Vec<PolyCoeffs> {
    let rng = Philox::new(99);
    let mut out = Vec::new();
    for i in 0..count as u64 {
        let mut block = 0u32;
        let mut u = || {
            block += 1;
            rng.uniform(i, 0, block)
        };
        let deg = 3 + (u() * 6.0) as usize;
        let coeffs = if i % 2 == 0 {
            (0..=deg).map(|_| (6.0 * u() - 3.0).exp()).collect()
        } else {
            // Mostly stable roots, some slightly unstable.
            let pairs = deg / 2;
            let real = deg - 2 * pairs;
            let re = |u: &mut dyn FnMut() -> f64| -3.0 * u() + 0.3;
            let rs: Vec<f64> = (0..real).map(|_| -0.1 - 3.0 * u()).collect();
            let ps: Vec<(f64, f64)> = (0..pairs).map(|_| (re(&mut u), 3.0 * u())).collect();
            from_roots(&rs, &ps)
        };
        if coeffs.iter().all(|c: &f64| *c > 0.0) {
            out.push(PolyCoeffs::new(coeffs).unwrap());
        }
    }
    out
}

#[test]
fn oracle_sanity() {
    assert_eq!(
        oracle(&PolyCoeffs::new(vec![6.0, 11.0, 6.0, 1.0]).unwrap()),
        Oracle::Stable
    );
    assert_eq!(
        oracle(&PolyCoeffs::new(vec![2.0, 1.0, 1.0, 1.0]).unwrap()),
        Oracle::Unstable
    );
    assert_eq!(
        oracle(&PolyCoeffs::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap()),
        Oracle::Indeterminate
    );
}

#[test]
fn verdicts_agree_with_roots() {
    let polys = random_polys(2000);
    let (mut stable, mut unstable, mut nie_hits) = (0, 0, 0);
    for p in &polys {
        let truth = oracle(p);
        if truth == Oracle::Indeterminate {
            continue;
        }
        match routh_hurwitz(p) {
            Ok(v) => assert_eq!(v, truth == Oracle::Stable, "{p:?}"),
            Err(PolyError::Indeterminate { .. }) => {}
            Err(e) => panic!("{e}"),
        }
        if p.degree() >= 5 && nie_stable(p).unwrap() {
            nie_hits += 1;
            assert_eq!(truth, Oracle::Stable, "{p:?}");
        }
        if let Ok(v) = polynomial_hurwitz(p) {
            assert_eq!(v.stable, truth == Oracle::Stable, "{p:?}");
        }
        match truth {
            Oracle::Stable => stable += 1,
            _ => unstable += 1,
        }
    }
    assert!(
        stable > 200 && unstable > 200 && nie_hits > 10,
        "{stable} {unstable} {nie_hits}"
    );
}

#[test]
fn companion_eigenvalues_match_characteristic_polynomial() {
    let g = GainVector::pid([4000.0, 1600.0, 160.0]).unwrap();
    let a = companion(&g);
    let m = DMatrix::from_row_slice(3, 3, a.matrix().as_slice());
    let p = char_coeffs(&g);
    for z in m.complex_eigenvalues().iter() {
        let (re, im) = p.eval_complex(z.re, z.im);
        assert!(re.hypot(im) < 1e-6 * 4000.0);
    }
    assert_eq!(oracle(&p), Oracle::Stable);
}
