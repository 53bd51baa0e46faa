//! Total mass and extinction time.

use super::{mean_se, replicate_map, ExperimentSpec, Outputs};
use crate::engine::{MassChain, SimConfig};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::table::{fmt_f64, Table};
use crate::verdict::Verdict;

/// Steps the particle count with the engine's step law and records
/// extinction by each report time and the mass at `mass_time`.
pub(super) fn extinction(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let seed = spec.seed()?;
    let n = spec.count("particles")?;
    let dt = spec.positive("dt")?;
    let reps = spec.count("replicates")?;
    let mut times = spec.list("times")?;
    let mass_time = spec.positive("mass_time")?;
    let (tol_abs, tol_z) = (spec.positive("tol.abs")?, spec.positive("tol.z")?);
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::config("report times must be positive"));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let config = SimConfig {
        dt,
        seed,
        ..SimConfig::new(n)
    };
    config.validate()?;

    let step_of = |t: f64| (t / dt).round() as u64;
    let report: Vec<u64> = times.iter().map(|&t| step_of(t)).collect();
    let mass_step = step_of(mass_time);
    let last = report.iter().copied().chain([mass_step]).max().unwrap_or(0);
    let results: Vec<(Vec<bool>, f64)> = replicate_map(reps, |i| {
        let mut rng = rng::stream(seed, tag::MASS_CHAIN, i);
        let mut chain = MassChain::new(n, config.initial_count());
        let mut extinct = vec![false; report.len()];
        let mut mass = 0.0;
        for k in 0..=last {
            if k > 0 {
                chain.step(config.offspring, dt, &mut rng);
            }
            if chain.is_extinct() {
                for (j, &s) in report.iter().enumerate() {
                    extinct[j] |= s >= k;
                }
                break;
            }
            if k == mass_step {
                mass = chain.mass();
            }
        }
        (extinct, mass)
    });

    let mut law = Table::new(&["t", "extinct", "replicates", "p_hat", "stderr", "limit", "finite_n"]);
    law.meta("N", n.to_string());
    law.meta("dt", fmt_f64(dt));
    law.meta("seed", seed.to_string());
    let nf = n as f64;
    for (j, &t) in times.iter().enumerate() {
        let k = results.iter().filter(|r| r.0[j]).count() as u64;
        let p = k as f64 / reps as f64;
        let limit = (-2.0 / t).exp();
        let finite = finite_extinction(n, config.initial_count(), t);
        let se = (finite * (1.0 - finite) / reps as f64).sqrt();
        law.push(vec![
            fmt_f64(t),
            k.to_string(),
            reps.to_string(),
            fmt_f64(p),
            fmt_f64((p * (1.0 - p) / reps as f64).sqrt()),
            fmt_f64(limit),
            fmt_f64(finite),
        ]);
        out.verdict(Verdict::within(format!("extinction_limit_t{t}"), p, limit, tol_abs));
        out.verdict(Verdict::within(format!("extinction_finite_n_t{t}"), p, finite, tol_z * se));
    }
    out.table("law", law);

    let masses: Vec<f64> = results.iter().map(|r| r.1).collect();
    let (mean, se) = mean_se(&masses);
    let mut mass = Table::new(&["t", "mean", "stderr", "replicates"]);
    mass.meta("N", n.to_string());
    mass.push(vec![fmt_f64(step_of(mass_time) as f64 * dt), fmt_f64(mean), fmt_f64(se), reps.to_string()]);
    out.table("mass", mass);
    let start = config.initial_count() as f64 / nf;
    out.verdict(Verdict::within("mean_mass", mean, start, tol_z * se));
    Ok(())
}

/// `P(ζ ≤ t)` for `count` independent particles: `(Nt/(2+Nt))^count`.
fn finite_extinction(n: u64, count: u64, t: f64) -> f64 {
    let a = n as f64 * t;
    (count as f64 * (a / (2.0 + a)).ln()).exp()
}
