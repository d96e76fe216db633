use expid::design::{check_inequality, lambda_gains, sec6_pattern, LambdaOverrides};
use expid::lyapunov::{build_p, companion, lyapunov_form};
use expid::poly::is_hurwitz;
use expid::rng::Philox;
use expid::{verify_certificate, GainVector};

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Random admissible PID gains: a log-concave shape with
/// `k_{i−1}² / (k_{i−2}k_i) ∈ (2, 6)`, scaled just above the smallest
/// admissible scale.
fn sample_admissible(rng: &Philox, stream: u64, n: usize, l: f64, m: f64) -> GainVector {
    let mut draw = {
        let mut block = 0u32;
        move || {
            block += 1;
            rng.uniform(stream, 0, block)
        }
    };
    let mut k = vec![1.0, (4.0 * draw() - 2.0).exp()];
    for i in 2..=n {
        let c = 2.0 + 4.0 * draw();
        k.push(k[i - 1] * k[i - 1] / (k[i - 2] * c));
    }
    let linear = l * k.iter().sum::<f64>() + k[n] * m * m;
    let mut s_min: f64 = linear / (k[0] * k[0]);
    for i in 2..=n {
        s_min = s_min.max(linear / (k[i - 1] * k[i - 1] - 2.0 * k[i - 2] * k[i]));
    }
    s_min = s_min.max((linear + k[n - 1]) / (k[n] * k[n]));
    let s = s_min * (1.0 + 1e-6 + 3.0 * draw());
    GainVector::pid(k.iter().map(|v| v * s).collect::<Vec<_>>()).unwrap()
}

#[test]
fn admissible_gains_are_certified_and_hurwitz() {
    let rng = Philox::new(2024);
    let mut checked = 0;
    for n in 1..=6 {
        for i in 0..200u64 {
            let stream = (n as u64) << 32 | i;
            let l = rng.uniform(stream, 1, 0);
            let m = rng.uniform(stream, 1, 1);
            let g = sample_admissible(&rng, stream, n, l, m);
            if !check_inequality(&g, l, m, 1.0).unwrap().admissible {
                continue;
            }
            checked += 1;
            let cert = verify_certificate(&g, l, m).unwrap_or_else(|r| panic!("{g}: {r}"));
            assert!(cert.min_eig_p > 0.0);
            let p = build_p(&g);
            assert!(cert.offdiag_residue < 1e-12 * p.norm_hs(), "{g}");
            assert!(is_hurwitz(&g).unwrap(), "{g}");
        }
    }
    assert!(checked > 1000, "{checked}");
}

#[test]
fn p_entries_are_bounded_by_gain_products() {
    let rng = Philox::new(5);
    for n in 1..=6 {
        for i in 0..50u64 {
            let g = sample_admissible(&rng, i, n, 0.5, 0.5);
            let p = build_p(&g);
            for r in 0..=n {
                for c in 0..n {
                    let upper = 2.0 * g.k(r) * g.k(c + 1);
                    let v = p[(r, c)];
                    assert!(
                        v >= 0.0 && v <= upper * (1.0 + 1e-12),
                        "{g} p[{r}][{c}] = {v}"
                    );
                }
                assert_eq!(p[(r, n)], g.k(r));
            }
        }
    }
}

#[test]
fn q_is_exactly_diagonal() {
    let g = sec6_pattern(8.6).unwrap();
    let p = build_p(&g);
    let form = lyapunov_form(&p, &companion(&g));
    assert!(form.max_offdiag() < 1e-12 * p.norm_hs());
}

#[test]
fn admissibility_is_monotone_in_scale() {
    let mut last = f64::NEG_INFINITY;
    let mut admitted = false;
    for step in 0..400 {
        let k = 5.0 + step as f64 * 0.025;
        let r = check_inequality(&sec6_pattern(k).unwrap(), SQRT3_2, 0.0, 1.0).unwrap();
        assert!(r.margin > last);
        last = r.margin;
        assert!(!(admitted && !r.admissible), "k = {k}");
        admitted |= r.admissible;
    }
    assert!(admitted);
}

#[test]
fn margin_is_continuous() {
    let g0 = sec6_pattern(8.6).unwrap();
    let base = check_inequality(&g0, SQRT3_2, 0.0, 1.0).unwrap().margin;
    for h in [1e-3, 1e-5, 1e-7] {
        let g = sec6_pattern(8.6 + h).unwrap();
        let m = check_inequality(&g, SQRT3_2, 0.0, 1.0).unwrap().margin;
        // d(margin)/dk is bounded by the derivative of 2k·k₃ − 1 + L·Σ at k = 8.6.
        assert!((m - base).abs() < 30.0 * h, "h = {h}");
    }
}

#[test]
fn lambda_defaults_admissible_over_grid() {
    for n in 1..=8 {
        for &l in &[0.0, 0.7, 2.0] {
            for &m in &[0.0, 0.7, 2.0] {
                for &lambda in &[0.1, 1.0, 5.0] {
                    let d =
                        lambda_gains(lambda, l, m, n, 1.0, &LambdaOverrides::default()).unwrap();
                    let r = check_inequality(&d.gains, l, m, 1.0).unwrap();
                    assert!(r.admissible, "n={n} L={l} M={m} λ={lambda}: {r:?}");
                }
            }
        }
    }
}

#[test]
fn rejected_scale_fails_certificate_or_inequality() {
    let g = GainVector::pid([1.0, 1.0, 4.0]).unwrap();
    assert!(!check_inequality(&g, 0.0, 0.0, 1.0).unwrap().admissible);
    let r = verify_certificate(&g, 0.0, 0.0).unwrap_err();
    assert!(r.not_negative_definite());
}
