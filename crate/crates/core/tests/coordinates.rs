use expid::model::{shifted_coordinates, unshift, z_inverse, z_transform, ShiftedState};
use expid::sim::controller_pid;
use expid::{GainVector, PlantSpec, Setpoint};
use proptest::prelude::*;

fn blocks(flat: &[f64], d: usize) -> Vec<Vec<f64>> {
    flat.chunks(d).map(<[f64]>::to_vec).collect()
}

fn state_and_betas() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1usize..=6, 1usize..=3).prop_flat_map(|(n, d)| {
        (
            Just(d),
            prop::collection::vec(-50.0..50.0f64, (n + 1) * d),
            prop::collection::vec(0.05..1.0f64, n),
        )
    })
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn z_round_trip((d, flat, betas) in state_and_betas()) {
        let y = ShiftedState { blocks: blocks(&flat, d) };
        let z = z_transform(&y, &betas).unwrap();
        let back = z_inverse(&z, &betas).unwrap();
        // Differencing z amplifies rounding by max|z| / (β₁⋯β_n).
        let z_max = z.flatten().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let prod: f64 = betas.iter().product();
        let scale = flat.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let tol = 16.0 * f64::EPSILON * (1.0 + z_max / (prod * scale));
        prop_assert!(max_rel_err(&flat, &back.flatten()) < tol);
    }

    #[test]
    fn controller_matches_shifted_feedback(
        gains in prop::collection::vec(0.1..20.0f64, 2..=6),
        x in prop::collection::vec(-5.0..5.0f64, 5),
        integral in -5.0..5.0f64,
        y_star in -3.0..3.0f64,
        u_star in -10.0..10.0f64,
    ) {
        let g = GainVector::pid(gains.clone()).unwrap();
        let n = g.n();
        let x = &x[..n];
        let mut z_star = vec![0.0; n];
        z_star[0] = y_star;
        let sp = Setpoint { y_star: vec![y_star], z_star, u_star: vec![u_star] };
        let u = controller_pid(x, &[integral], &g, &[y_star])[0];
        let y = shifted_coordinates(x, &[integral], &sp, g.k(0));
        let feedback: f64 = -(0..=n).map(|i| g.k(i) * y.blocks[i][0]).sum::<f64>() + u_star;
        let scale = 1.0 + (0..=n).map(|i| (g.k(i) * y.blocks[i][0]).abs()).sum::<f64>();
        prop_assert!((u - feedback).abs() <= 1e-10 * scale, "{u} vs {feedback}");

        let (x_back, i_back) = unshift(&y, &sp, g.k(0));
        prop_assert!(max_rel_err(x, &x_back) < 1e-12);
        prop_assert!((i_back[0] - integral).abs() < 1e-12 * (1.0 + integral.abs() + (u_star / g.k(0)).abs()));
    }

    #[test]
    fn equilibrium_residual_within_tolerance(
        a in -0.5..0.5f64,
        d in -20.0..20.0f64,
        mu in 0.0..10.0f64,
        y in -3.0..3.0f64,
    ) {
        let plant = PlantSpec::scalar(3, move |x, u| a * x[0].sin() + d + u + mu * u.tanh(), |_| 0.0)
            .unwrap();
        let sp = expid::solve_equilibrium(&plant, &[y]).unwrap();
        prop_assert!(plant.drift_vec(&sp.z_star, &sp.u_star)[0].abs() <= 1e-10);
    }
}

#[test]
fn zero_maps_to_zero() {
    let y = ShiftedState {
        blocks: vec![vec![0.0, 0.0]; 4],
    };
    let z = z_transform(&y, &[0.3, 0.2, 0.1]).unwrap();
    assert!(z.flatten().iter().all(|v| *v == 0.0));
}
