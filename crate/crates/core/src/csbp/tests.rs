use proptest::prelude::*;

use super::*;
use crate::rng::{stream, tag};
use crate::stats::{empirical_laplace, ks_two_sample, McSummary};

#[test]
fn cms_constants_match_the_general_formula() {
    let t = (std::f64::consts::FRAC_PI_2 * ALPHA).tan();
    assert!((t.atan() / ALPHA - CMS_SHIFT).abs() < 1e-15);
    assert!(((1.0 + t * t).powf(1.0 / (2.0 * ALPHA)) - CMS_SCALE).abs() < 1e-15);
    assert!((3f64.powf(-1.0 / 3.0) - SCALE_PER_TIME).abs() < 1e-15);
    assert!(((2.0f64 / 3.0).sqrt() - PSI_COEFF).abs() < 1e-15);
}

#[test]
fn mechanism_drives_the_laplace_exponent() {
    for lambda in [0.3, 1.0, 6.0, 24.0, 1e4] {
        assert_eq!(laplace_exponent(0.0, lambda), lambda);
        assert!((laplace_exponent(1e-12, lambda) - lambda).abs() < 1e-6 * lambda);
        for r in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let c = (6.0 / lambda).sqrt();
            let u = laplace_exponent(r, lambda);
            // d/dr 6(r+c)^-2 = -12(r+c)^-3
            let du = -12.0 / (r + c).powi(3);
            assert!((du + psi(u)).abs() < 1e-12 * du.abs(), "{r} {lambda}");
            let h = 1e-5;
            let fd = (laplace_exponent(r + h, lambda) - laplace_exponent(r - h, lambda)) / (2.0 * h);
            assert!((fd + psi(u)).abs() < 1e-6 * psi(u));
        }
    }
}

#[test]
fn laplace_examples() {
    assert_eq!(laplace_exact(0.0, 1.0, 3.0), 1.0);
    assert_eq!(laplace_exact(0.0, 0.0, f64::INFINITY), 1.0);
    assert_eq!(laplace_exact(1.0, 0.0, f64::INFINITY), 0.0);
    assert!((laplace_exact(0.7, 0.0, 2.0) - (-1.4f64).exp()).abs() < 1e-15);
    assert!((laplace_exact(1.0, 6f64.sqrt(), f64::INFINITY) - 0.367_879_441_171_442_3).abs() < 1e-12);
    assert!((laplace_exact(1.0, 1.0, 6.0) - 0.223_130_160_148_429_8).abs() < 1e-12);
    assert!((laplace_exact(1.0, 2.0, f64::INFINITY) - (-1.5f64).exp()).abs() < 1e-15);
}

#[test]
fn increment_has_the_stated_laplace_transform() {
    let dt = 0.01;
    let mut rng = stream(3, tag::CSBP, 0);
    let xs: Vec<f64> = (0..1_000_000)
        .map(|_| stable_increment(dt, &mut rng).unwrap())
        .collect();
    // Shift to non-negative samples; the transform picks up exp(λ·shift).
    let shift = -xs.iter().cloned().fold(0.0, f64::min);
    let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
    let lambdas = [0.5, 1.0, 2.0];
    for e in empirical_laplace(&shifted, &lambdas).unwrap() {
        let scale = (e.lambda * shift).exp();
        let target = (dt * psi(e.lambda)).exp();
        let z = (e.value * scale - target) / (e.std_error * scale);
        assert!(z.abs() < 3.0, "λ={}: {} vs {target}", e.lambda, e.value * scale);
    }
    assert!(((dt * psi(1.0)).exp() - 1.00820).abs() < 1e-5);
}

#[test]
fn increment_has_a_light_lower_tail() {
    let dt = 0.01;
    let n = 1_000_000;
    let mut rng = stream(4, tag::CSBP, 0);
    let min = (0..n)
        .map(|_| stable_increment(dt, &mut rng).unwrap())
        .fold(f64::INFINITY, f64::min);
    let bound = lower_tail_bound(dt, n, 1e-6);
    assert!(min > bound, "{min} below {bound}");
    assert!(bound > -0.3);
}

#[test]
fn increments_add_up() {
    let mut rng = stream(5, tag::CSBP, 0);
    let one: Vec<f64> = (0..100_000).map(|_| stable_increment(0.01, &mut rng).unwrap()).collect();
    let two: Vec<f64> = (0..100_000)
        .map(|_| stable_increment(0.004, &mut rng).unwrap() + stable_increment(0.006, &mut rng).unwrap())
        .collect();
    let ks = ks_two_sample(&one, &two).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn increment_rejects_bad_steps() {
    let mut rng = stream(0, tag::CSBP, 0);
    for dt in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        assert!(stable_increment(dt, &mut rng).is_err());
    }
}

#[test]
fn zero_start_stays_at_zero() {
    let mut rng = stream(0, tag::CSBP, 0);
    let p = simulate_csbp(0.0, 1.0, 0.01, &mut rng).unwrap();
    assert!(p.values.iter().all(|&y| y == 0.0));
    assert_eq!(p.absorbed_at, Some(0.0));
    assert_eq!(p.levels.len(), 101);
}

#[test]
fn grid_ends_at_the_horizon() {
    let mut rng = stream(0, tag::CSBP, 0);
    let p = simulate_csbp(1.0, 2.0, 0.003, &mut rng).unwrap();
    assert_eq!(*p.levels.last().unwrap(), 2.0);
    assert!(p.step() <= 0.003);
    assert!(simulate_csbp(-1.0, 1.0, 0.01, &mut rng).is_err());
    assert!(simulate_csbp(1.0, 0.0, 0.01, &mut rng).is_err());
    assert!(simulate_csbp(1.0, 1.0, 0.0, &mut rng).is_err());
}

fn endpoints(seed: u64, reps: u64, targets: &[f64], horizon: f64) -> Vec<Vec<f64>> {
    let dr = default_step(horizon);
    let mut cols = vec![Vec::new(); targets.len()];
    for i in 0..reps {
        let mut rng = stream(seed, tag::CSBP, i);
        let ys = sample_levels(1.0, horizon, dr, targets, &mut rng).unwrap();
        for (c, y) in cols.iter_mut().zip(ys) {
            c.push(y);
        }
    }
    cols
}

#[test]
fn euler_paths_match_the_exact_law() {
    let cols = endpoints(6, 20_000, &[1.0, 2.0], 2.0);
    let m = McSummary::from_samples(&cols[0]).unwrap();
    assert!(m.z_against(1.0).abs() < 3.0, "{m:?}");
    let e = empirical_laplace(&cols[0], &[6.0]).unwrap()[0];
    let target = laplace_exact(1.0, 1.0, 6.0);
    assert!((e.value - target).abs() < 3.0 * e.std_error + 0.005, "{} vs {target}", e.value);
    let zeros = cols[1].iter().filter(|&&y| y == 0.0).count() as f64 / cols[1].len() as f64;
    assert!((zeros - laplace_exact(1.0, 2.0, f64::INFINITY)).abs() < 0.02, "{zeros}");
}

#[test]
fn csv_round_trip() {
    let mut rng = stream(9, tag::CSBP, 0);
    let p = simulate_csbp(1.0, 1.0, 0.1, &mut rng).unwrap();
    let mut buf = Vec::new();
    p.write_csv(9, &mut buf).unwrap();
    let t = Table::parse(std::str::from_utf8(&buf).unwrap()).unwrap();
    let y = t.column("Y").unwrap();
    for (row, v) in t.rows.iter().zip(&p.values) {
        assert_eq!(row[y].parse::<f64>().unwrap(), *v);
    }
}

#[test]
fn shooting_recovers_the_closed_form() {
    for lambda in [1.0, 6.0, 24.0] {
        let (r, x_min) = (2.0, -3.0);
        let s = solve_exit_pde(lambda, r, x_min, 1e-10).unwrap();
        let c = (6.0 / lambda).sqrt();
        let err = s
            .x
            .iter()
            .zip(&s.u)
            .map(|(x, u)| (u - 6.0 / (r - x + c).powi(2)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "λ={lambda}: {err}");
        assert_eq!(*s.x.last().unwrap(), r);
        assert!((s.u.last().unwrap() - lambda).abs() < 1e-6);
        assert!(s.u.windows(2).all(|w| w[1] >= w[0] && w[0] >= 0.0));
        let u0 = s.value_at(0.0);
        let direct = laplace_exact(1.0, r, lambda);
        assert!(((-u0).exp() - direct).abs() < 1e-6, "{} vs {direct}", (-u0).exp());
    }
}

#[test]
fn large_boundary_data_approach_the_extinction_profile() {
    let mut last = 0.0;
    for lambda in [1e2, 1e4, 1e6] {
        let s = solve_exit_pde(lambda, 1.0, -2.0, 1e-10).unwrap();
        let u = s.value_at(0.0);
        let c = (6.0 / lambda).sqrt();
        assert!((u - 6.0 / (1.0 + c).powi(2)).abs() < 1e-5 * u, "{lambda}: {u}");
        assert!(u > last && u < 6.0);
        last = u;
    }
    assert!(6.0 - last < 0.03);
}

#[test]
fn shooting_rejects_bad_input() {
    assert!(solve_exit_pde(0.0, 1.0, 0.0, 1e-8).is_err());
    assert!(solve_exit_pde(f64::INFINITY, 1.0, 0.0, 1e-8).is_err());
    assert!(solve_exit_pde(1.0, 1.0, 1.0, 1e-8).is_err());
    assert!(solve_exit_pde(1.0, 1.0, 0.0, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paths_are_non_negative_and_absorbing(seed in any::<u64>(), y0 in 0.0f64..3.0) {
        let mut rng = stream(seed, tag::CSBP, 0);
        let p = simulate_csbp(y0, 1.0, 0.01, &mut rng).unwrap();
        prop_assert!(p.values.iter().all(|&y| y >= 0.0));
        if let Some(a) = p.absorbed_at {
            prop_assert!(p.levels.iter().zip(&p.values).all(|(r, y)| *r < a || *y == 0.0));
        } else {
            prop_assert!(p.values.iter().all(|&y| y > 0.0));
        }
    }

    #[test]
    fn laplace_is_a_probability(y0 in 0.0f64..10.0, r in 0.0f64..10.0, l in 0.0f64..100.0) {
        let v = laplace_exact(y0, r, l);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(laplace_exact(y0, r, f64::INFINITY) <= v + 1e-15);
    }
}

#[test]
fn folded_sampler_matches_the_textbook_form() {
    let mut a = stream(11, tag::CSBP, 0);
    let mut b = stream(11, tag::CSBP, 0);
    for _ in 0..10_000 {
        let dt = 0.37;
        let x = stable_increment(dt, &mut a).unwrap();
        let y = SCALE_PER_TIME * dt.powf(2.0 / 3.0) * standard_stable(&mut b);
        assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{x} {y}");
    }
}
