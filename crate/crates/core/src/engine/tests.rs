use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::exact::{self, ExitParams, LeapPolicy, OccupationParams};
use super::*;
use crate::rng::{stream, tag};
use crate::stats::{ks_two_sample, normal_cdf, McSummary};

fn cfg(n: u64) -> SimConfig {
    SimConfig::new(n)
}

#[test]
fn init_examples() {
    let s = init_system(&cfg(100)).unwrap();
    assert_eq!(s.alive_count(), 100);
    assert!(s.positions().iter().all(|&x| x == 0.0));
    assert_eq!(s.time(), 0.0);

    let mut c = cfg(100);
    c.initial_mass = 0.005;
    assert!(matches!(init_system(&c), Err(Error::ZeroParticles { .. })));

    let mut c = cfg(1000);
    c.initial_mass = 2.0;
    let s = init_system(&c).unwrap();
    assert_eq!(s.alive_count(), 2000);
    assert_eq!(s.total_mass(), 2.0);
}

#[test]
fn rejects_coarse_steps() {
    let mut c = cfg(100);
    c.dt = 0.002;
    assert!(matches!(init_system(&c), Err(Error::StepTooLarge { .. })));
    c.dt = 0.001;
    assert!(init_system(&c).is_ok());
}

#[test]
fn absorbed_needs_level_above_start() {
    let c = cfg(10).absorbed_at(-1.0);
    assert!(init_system(&c).is_err());
    let mut c = cfg(10);
    c.mode = Mode::Absorbed;
    assert!(init_system(&c).is_err());
    assert!(matches!(run_until_extinction(&cfg(10).absorbed_at(1.0)), Err(Error::WrongMode { .. })));
    assert!(matches!(run_absorbed(&cfg(10)), Err(Error::WrongMode { .. })));
}

#[test]
fn empty_system_stays_empty() {
    let mut s = init_with_count(&cfg(10), 0).unwrap();
    s.step();
    assert_eq!(s.alive_count(), 0);
    assert_eq!(s.total_mass(), 0.0);
}

#[test]
fn pure_diffusion_has_unit_variance() {
    let mut c = cfg(1);
    c.offspring = OffspringLaw::Disabled;
    c.dt = 0.01;
    c.t_max = 1.0;
    let xs: Vec<f64> = (0..10_000)
        .map(|i| {
            let mut s = init_system(&c.with_replicate(i)).unwrap();
            for _ in 0..100 {
                s.step();
            }
            s.positions()[0]
        })
        .collect();
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let m = McSummary::from_samples(&sq).unwrap();
    assert!(m.z_against(1.0).abs() < 3.0, "{m:?}");
}

#[test]
fn disabled_branching_matches_gaussian_profile() {
    let mut c = cfg(1_000_000);
    c.offspring = OffspringLaw::Disabled;
    c.dt = 0.25;
    let mut s = init_system(&c).unwrap();
    for _ in 0..4 {
        s.step();
    }
    let grid = Grid::new(-3.0, 0.25);
    let counts = s.binned(&grid);
    let n = 1e6;
    let mut chi2 = 0.0;
    let mut cells = 0;
    let mut tail_obs = 0u64;
    let mut tail_exp = 0.0;
    for k in -1..=24 {
        let (obs, p) = match k {
            -1 => {
                let obs = s.positions().iter().filter(|&&x| x < -3.0).count() as u64;
                (obs, normal_cdf(-3.0))
            }
            24 => {
                let obs = s.positions().iter().filter(|&&x| x >= 3.0).count() as u64;
                (obs, normal_cdf(-3.0))
            }
            _ => (counts.get(k), normal_cdf(grid.right(k)) - normal_cdf(grid.left(k))),
        };
        if k < 0 || k == 24 {
            tail_obs += obs;
            tail_exp += n * p;
            continue;
        }
        let e = n * p;
        chi2 += (obs as f64 - e).powi(2) / e;
        cells += 1;
    }
    chi2 += (tail_obs as f64 - tail_exp).powi(2) / tail_exp;
    cells += 1;
    // chi-square 99th percentile with 24 degrees of freedom
    assert_eq!(cells, 25);
    assert!(chi2 < 42.98, "chi2 = {chi2}");
}

fn mass_at(c: &SimConfig, steps: usize, reps: u64) -> McSummary {
    let xs: Vec<f64> = (0..reps)
        .map(|i| {
            let mut s = init_system(&c.with_replicate(i)).unwrap();
            for _ in 0..steps {
                s.step();
            }
            s.total_mass()
        })
        .collect();
    McSummary::from_samples(&xs).unwrap()
}

#[test]
fn total_mass_is_a_martingale() {
    for law in [OffspringLaw::Exact, OffspringLaw::Binary] {
        let mut c = cfg(50);
        c.offspring = law;
        c.seed = 11;
        let m = mass_at(&c, 100, 10_000);
        assert!(m.z_against(1.0).abs() < 3.0, "{law:?} {m:?}");
    }
}

#[test]
fn forced_death_gives_one_step_extinction() {
    let mut c = cfg(1000);
    c.initial_mass = 0.001;
    c.t_max = 0.01;
    c.offspring = OffspringLaw::Binary;
    let traj = (0..1000)
        .map(|i| run_until_extinction(&c.with_replicate(i)).unwrap())
        .find(|t| t.total_count(1) == 0)
        .expect("some replicate dies in its first step");
    assert_eq!(traj.extinction_time, Some(c.dt));
    assert_eq!(traj.len(), 2);
}

#[test]
fn trajectory_bookkeeping() {
    let mut c = cfg(200);
    c.t_max = 3.0;
    c.seed = 5;
    for i in 0..20 {
        let t = run_until_extinction(&c.with_replicate(i)).unwrap();
        assert_eq!(t.times[0], 0.0);
        assert!(t.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(t.snapshots.len(), t.times.len());
        for (k, s) in t.snapshots.iter().enumerate() {
            assert_eq!(t.total_mass(k), s.total() as f64 / 200.0);
        }
        if let Some(z) = t.extinction_time {
            let k = t.sample_at(z).unwrap();
            assert_eq!(t.times[k], z);
            assert!(t.snapshots[k..].iter().all(|s| s.total() == 0));
            assert!(t.snapshots[..k].iter().all(|s| s.total() > 0));
        } else {
            assert!(t.horizon() >= c.t_max - 1e-9);
        }
    }
}

#[test]
fn identical_configs_are_bit_identical() {
    let mut c = cfg(300);
    c.seed = 99;
    c.t_max = 1.0;
    let a = run_until_extinction(&c).unwrap();
    let b = run_until_extinction(&c).unwrap();
    assert_eq!(a, b);
    let d = run_until_extinction(&c.with_replicate(1)).unwrap();
    assert_ne!(a, d);
}

#[test]
fn frozen_count_never_decreases() {
    let c = cfg(200).absorbed_at(0.3);
    let mut s = init_system(&c).unwrap();
    let mut last = 0;
    let mut live_below = true;
    for _ in 0..5000 {
        s.step();
        assert!(s.frozen_count() >= last);
        last = s.frozen_count();
        live_below &= s.positions().iter().all(|&x| x < 0.3);
    }
    assert!(live_below);
    assert!(last > 0);
}

#[test]
fn level_just_above_start_freezes_everything() {
    let mut c = cfg(100).absorbed_at(1e-6);
    c.seed = 3;
    let good = (0..200)
        .filter(|&i| {
            let run = run_absorbed(&c.with_replicate(i)).unwrap();
            assert!(run.settled);
            (run.exit_mass() - 1.0).abs() <= 0.01 + 1e-12
        })
        .count();
    assert!(good >= 198, "{good}");
}

fn finite_n_extinction(n: u64, y0: f64, r: f64) -> f64 {
    let nf = n as f64;
    let c = (6.0 / nf).sqrt();
    (1.0 - 6.0 / (nf * (r + c).powi(2))).powf(nf * y0)
}

#[test]
fn stepped_exit_mass_is_a_martingale_with_the_finite_n_zero_law() {
    // Frozen plus alive mass is a martingale at any fixed horizon. The zero
    // event is bracketed by "nothing frozen and extinct" and "nothing frozen".
    let mut c = cfg(20).absorbed_at(1.0);
    c.dt = 2e-3;
    c.t_max = 10.0;
    c.seed = 8;
    let reps = 3000u64;
    let mut totals = Vec::new();
    let (mut lo, mut hi) = (0u64, 0u64);
    for i in 0..reps {
        let run = run_absorbed(&c.with_replicate(i)).unwrap();
        let last = run.trajectory.len() - 1;
        totals.push(run.exit_mass() + run.trajectory.total_mass(last));
        if run.frozen_count == 0 {
            hi += 1;
            lo += run.settled as u64;
        }
    }
    let m = McSummary::from_samples(&totals).unwrap();
    assert!(m.z_against(1.0).abs() < 3.0, "{m:?}");
    let p = finite_n_extinction(20, 1.0, 1.0);
    assert!(crate::stats::bernoulli_test(lo, reps, p).unwrap() < 3.0, "{lo} vs {p}");
    assert!(crate::stats::bernoulli_test(hi, reps, p).unwrap() > -3.0, "{hi} vs {p}");
}

#[test]
fn count_chain_matches_particle_counts() {
    for law in [OffspringLaw::Exact, OffspringLaw::Binary] {
        let mut c = cfg(30);
        c.offspring = law;
        c.seed = 21;
        let steps = 150;
        let particles: Vec<f64> = (0..3000)
            .map(|i| {
                let mut s = init_system(&c.with_replicate(i)).unwrap();
                for _ in 0..steps {
                    s.step();
                }
                s.alive_count() as f64
            })
            .collect();
        let chain: Vec<f64> = (0..3000)
            .map(|i| {
                let mut rng = stream(c.seed, tag::MASS_CHAIN, i);
                let mut m = MassChain::new(30, 30);
                for _ in 0..steps {
                    m.step(law, c.dt, &mut rng);
                }
                m.count as f64
            })
            .collect();
        let ks = ks_two_sample(&particles, &chain).unwrap();
        assert!(ks.p_value > 0.01, "{law:?}: {ks:?}");
    }
}

#[test]
fn exact_offspring_law_has_the_continuous_time_variance() {
    let mut rng = stream(1, tag::CALIBRATION, 0);
    let rate_step = 0.1;
    let law = OffspringLaw::Exact;
    let p = law.event_probability(rate_step);
    let ks: Vec<f64> = (0..200_000)
        .map(|_| {
            if rng.random::<f64>() < p {
                law.offspring_given_event(rate_step, &mut rng) as f64
            } else {
                1.0
            }
        })
        .collect();
    let m = McSummary::from_samples(&ks).unwrap();
    assert!(m.z_against(1.0).abs() < 3.0);
    assert!((m.variance - rate_step).abs() < 0.01, "{}", m.variance);
}

#[test]
fn chain_extinction_matches_discrete_oracle() {
    let n = 20u64;
    let dt = 0.1 / n as f64;
    let reps = 20_000;
    for law_steps in [20usize, 200] {
        let t = law_steps as f64 * dt;
        let zeros = (0..reps)
            .filter(|&i| {
                let mut rng = stream(4, tag::MASS_CHAIN, i);
                let mut m = MassChain::new(n, n);
                for _ in 0..law_steps {
                    m.step(OffspringLaw::Exact, dt, &mut rng);
                }
                m.is_extinct()
            })
            .count() as u64;
        let nt = n as f64 * t;
        let oracle = (nt / (2.0 + nt)).powi(n as i32);
        let z = crate::stats::bernoulli_test(zeros, reps, oracle).unwrap();
        assert!(z.abs() < 3.0, "t={t}: {zeros} vs {oracle}");
    }
}

/// Plain recursive simulation of one family over `span`, used as the
/// reference for the coalescent-point sampler.
fn family_by_events<R: Rng>(x: f64, t: f64, span: f64, n: f64, rng: &mut R, out: &mut Vec<f64>) {
    let life: f64 = Exp1.sample(rng);
    let life = life / n;
    let z: f64 = StandardNormal.sample(rng);
    if t + life >= span {
        out.push(x + (span - t).sqrt() * z);
        return;
    }
    let y = x + life.sqrt() * z;
    if rng.random::<bool>() {
        family_by_events(y, t + life, span, n, rng, out);
        family_by_events(y, t + life, span, n, rng, out);
    }
}

#[test]
fn family_leap_matches_event_simulation() {
    let (n, span) = (40u64, 0.3);
    let mut rng_a = stream(2, tag::CALIBRATION, 1);
    let mut rng_b = stream(2, tag::CALIBRATION, 2);
    let mut sizes = (Vec::new(), Vec::new());
    let mut spreads = (Vec::new(), Vec::new());
    let mut means = (Vec::new(), Vec::new());
    let mut out = Vec::new();
    for _ in 0..40_000 {
        out.clear();
        exact::leap_family(0.0, span, n, &mut rng_a, &mut out);
        sizes.0.push(out.len() as f64);
        if out.len() >= 2 {
            let (lo, hi) = out.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            spreads.0.push(hi - lo);
            means.0.push(out.iter().sum::<f64>() / out.len() as f64);
        }
        out.clear();
        family_by_events(0.0, 0.0, span, n as f64, &mut rng_b, &mut out);
        sizes.1.push(out.len() as f64);
        if out.len() >= 2 {
            let (lo, hi) = out.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            spreads.1.push(hi - lo);
            means.1.push(out.iter().sum::<f64>() / out.len() as f64);
        }
    }
    for (name, a, b) in [("size", &sizes.0, &sizes.1), ("spread", &spreads.0, &spreads.1), ("mean", &means.0, &means.1)] {
        let ks = ks_two_sample(a, b).unwrap();
        assert!(ks.p_value > 0.01, "{name}: {ks:?}");
    }
}

#[test]
fn exact_exit_matches_finite_n_law_with_and_without_leaps() {
    for (i, leap) in [LeapPolicy::never(), LeapPolicy::default()].into_iter().enumerate() {
        let n = if i == 0 { 20 } else { 200 };
        let params = ExitParams {
            density: n,
            level: 1.0,
            t_max: if i == 0 { 1e4 } else { 1e8 },
            leap,
            stop_at_first: false,
        };
        let mut zeros = 0;
        let mut ys = Vec::new();
        let mut unsettled = 0;
        for k in 0..5_000 {
            let mut rng = stream(10 + i as u64, tag::ABSORBED, k);
            let o = exact::run_exit(0.0, n, &params, &mut rng);
            if !o.settled {
                unsettled += 1;
                continue;
            }
            zeros += (o.frozen == 0) as u64;
            ys.push(o.frozen as f64 / n as f64);
        }
        assert!(unsettled <= 10, "{unsettled}");
        let reps = ys.len() as u64;
        let m = McSummary::from_samples(&ys).unwrap();
        assert!(m.z_against(1.0).abs() < 3.0, "{leap:?}: {m:?}");
        let p = finite_n_extinction(n, 1.0, 1.0);
        let z = crate::stats::bernoulli_test(zeros, reps, p).unwrap();
        assert!(z.abs() < 3.0, "{leap:?}: {zeros} vs {p}");
    }
}

#[test]
fn exit_stops_at_first_freeze() {
    let params = ExitParams {
        density: 100,
        level: 0.5,
        t_max: 100.0,
        leap: LeapPolicy::default(),
        stop_at_first: true,
    };
    let mut rng = stream(1, tag::ABSORBED, 0);
    let o = exact::run_exit(0.0, 100, &params, &mut rng);
    assert!(o.frozen <= 1);
}

#[test]
fn event_and_stepped_occupation_share_their_mean() {
    let n = 30u64;
    let mut c = cfg(n);
    c.t_max = 1.0;
    c.grid_width = 0.1;
    c.seed = 31;
    let grid = c.grid();
    let params = OccupationParams {
        density: n,
        t_max: c.t_max,
        sample_dt: c.dt,
        grid,
        right_window: None,
        leap: LeapPolicy::never(),
        abandon_survivors: false,
    };
    // bins centred on 0.3..=0.7 cover [0.25, 0.75)
    let bins = grid.index(0.3)..=grid.index(0.7);
    let steps = (c.t_max / c.dt).round() as usize;
    let target: f64 = (1..=steps)
        .map(|k| {
            let s = (k as f64 * c.dt).sqrt();
            c.dt * (normal_cdf(0.75 / s) - normal_cdf(0.25 / s))
        })
        .sum();
    let reps = 4000;
    let stepped: Vec<f64> = (0..reps)
        .map(|i| {
            let t = run_until_extinction(&c.with_replicate(i)).unwrap();
            let visits: u64 = t.snapshots[1..]
                .iter()
                .map(|s| bins.clone().map(|k| s.get(k)).sum::<u64>())
                .sum();
            visits as f64 * c.dt / n as f64
        })
        .collect();
    let events: Vec<f64> = (0..reps)
        .map(|i| {
            let mut rng = stream(31, tag::PROFILE, i);
            let r = exact::run_occupation(0.0, n, &params, &mut rng);
            bins.clone().map(|k| r.counts.get(k)).sum::<u64>() as f64 * c.dt / n as f64
        })
        .collect();
    for xs in [&stepped, &events] {
        let m = McSummary::from_samples(xs).unwrap();
        assert!(m.z_against(target).abs() < 3.0, "{m:?} vs {target}");
    }
}

#[test]
fn right_window_keeps_the_maximum_law() {
    let n = 50u64;
    let grid = Grid::centered(0.02);
    let base = OccupationParams {
        density: n,
        t_max: 10.0,
        sample_dt: 2e-3,
        grid,
        right_window: None,
        leap: LeapPolicy::never(),
        abandon_survivors: true,
    };
    let windowed = OccupationParams {
        right_window: Some(0.3),
        leap: LeapPolicy::default(),
        ..base
    };
    let mut full = Vec::new();
    let mut roi = Vec::new();
    let mut leaps = 0;
    for i in 0..1000 {
        let mut rng = stream(5, tag::PROFILE, i);
        let a = exact::run_occupation(0.0, n, &base, &mut rng);
        if a.extinct {
            full.push(a.max_sample);
        }
        let mut rng = stream(6, tag::PROFILE, i);
        let b = exact::run_occupation(0.0, n, &windowed, &mut rng);
        if b.extinct {
            roi.push(b.max_sample);
        }
        leaps += b.leaps;
    }
    assert!(leaps > 0);
    let ks = ks_two_sample(&full, &roi).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}
