//! Exit measures, the branching process in the level, and its equation.

use std::time::Instant;

use super::{mean_se, replicate_map, ExperimentSpec, Outputs};
use crate::csbp::{laplace_exact, sample_levels, solve_exit_pde};
use crate::engine::SimConfig;
use crate::error::{Error, Result};
use crate::exitmeasure::{exit_ladder_exact, ExitLadder};
use crate::rng::{self, tag};
use crate::stats::{empirical_laplace, ks_two_sample};
use crate::table::{fmt_f64, Table};
use crate::verdict::Verdict;

/// Event-driven ladders, one per replicate; unsettled ones are dropped and
/// counted.
fn ladders(spec: &ExperimentSpec, levels: &[f64], out: &mut Outputs) -> Result<Vec<(u64, ExitLadder)>> {
    let seed = spec.seed()?;
    let config = SimConfig {
        initial_mass: spec.positive("y0")?,
        t_max: spec.positive("t_max")?,
        seed,
        ..SimConfig::new(spec.count("particles")?)
    };
    let leap = spec.leap()?;
    let reps = spec.count("replicates")?;
    let runs = replicate_map(reps, |i| {
        let mut rng = rng::stream(seed, tag::LADDER, i);
        exit_ladder_exact(&config, levels, leap, &mut rng)
    });
    let mut kept = Vec::with_capacity(runs.len());
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok(l) => kept.push((i as u64, l)),
            Err(Error::NotSettled { .. }) => out.discard("unsettled_ladder", 1),
            Err(e) => return Err(e),
        }
    }
    Ok(kept)
}

fn ladder_table(ladders: &[(u64, ExitLadder)], spec: &ExperimentSpec) -> Result<Table> {
    let mut t = Table::new(&["replicate", "level", "exit_mass", "settle_time"]);
    t.meta("N", spec.u64("particles")?.to_string());
    t.meta("seed", spec.seed()?.to_string());
    for (i, l) in ladders {
        for k in 0..l.len() {
            t.push(vec![
                i.to_string(),
                fmt_f64(l.levels[k]),
                fmt_f64(l.exit_mass(k)),
                fmt_f64(l.settle_times[k]),
            ]);
        }
    }
    Ok(t)
}

fn level_index(levels: &[f64], r: f64) -> Result<usize> {
    levels
        .iter()
        .position(|&l| (l - r).abs() <= 1e-12 * r.abs().max(1.0))
        .ok_or_else(|| Error::config(format!("check level {r} is not on the ladder")))
}

pub(super) fn exit_law(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let levels = spec.list("levels")?;
    let checks = spec.list("check_levels")?;
    let check_idx = checks.iter().map(|&r| level_index(&levels, r)).collect::<Result<Vec<_>>>()?;
    let (tol_zero, tol_z) = (spec.positive("tol.zero")?, spec.positive("tol.z")?);
    let ladders = ladders(spec, &levels, out)?;
    let mut summary = Table::new(&["level", "p_zero", "p_zero_limit", "mean", "stderr", "replicates"]);
    summary.meta("N", spec.u64("particles")?.to_string());
    let y0 = ladders.first().map(|l| l.1.initial_mass).unwrap_or(f64::NAN);
    for (k, &r) in levels.iter().enumerate() {
        let masses: Vec<f64> = ladders.iter().map(|l| l.1.exit_mass(k)).collect();
        let zero = masses.iter().filter(|&&m| m == 0.0).count() as f64 / masses.len().max(1) as f64;
        let limit = (-6.0 * y0 / (r * r)).exp();
        let (mean, se) = mean_se(&masses);
        summary.push(vec![
            fmt_f64(r),
            fmt_f64(zero),
            fmt_f64(limit),
            fmt_f64(mean),
            fmt_f64(se),
            masses.len().to_string(),
        ]);
        if check_idx.contains(&k) {
            out.verdict(Verdict::within(format!("p_zero_r{r}"), zero, limit, tol_zero));
            out.verdict(Verdict::within(format!("mean_exit_mass_r{r}"), mean, y0, tol_z * se));
        }
    }
    out.table("summary", summary);
    out.table("ladders", ladder_table(&ladders, spec)?);
    Ok(())
}

/// `Y` at each level on `reps` Euler paths from `y0`.
fn csbp_samples(spec: &ExperimentSpec, levels: &[f64], reps: u64) -> Result<Vec<Vec<f64>>> {
    let seed = spec.seed()?;
    let y0 = spec.positive("y0")?;
    let dr = spec.positive("dr")?;
    if levels.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::config("levels must be positive"));
    }
    let top = levels.iter().copied().fold(0.0, f64::max);
    replicate_map(reps, |i| {
        let mut rng = rng::stream(seed, tag::CSBP, i);
        sample_levels(y0, top, dr, levels, &mut rng)
    })
    .into_iter()
    .collect()
}

pub(super) fn csbp_law(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let levels = spec.list("levels")?;
    let lambdas = spec.list("lambdas")?;
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::config("lambdas must be positive"));
    }
    let tol = spec.positive("tol.laplace")?;
    let y0 = spec.positive("y0")?;
    let paths = csbp_samples(spec, &levels, spec.count("replicates")?)?;
    let mut table = Table::new(&["level", "lambda", "empirical", "stderr", "exact"]);
    table.meta("dr", spec.settings["dr"].clone());
    table.meta("paths", paths.len().to_string());
    for (k, &r) in levels.iter().enumerate() {
        let ys: Vec<f64> = paths.iter().map(|p| p[k]).collect();
        for e in empirical_laplace(&ys, &lambdas)? {
            let exact = laplace_exact(y0, r, e.lambda);
            table.push_floats(&[r, e.lambda, e.value, e.std_error, exact]);
            out.verdict(Verdict::within(format!("laplace_r{r}_lambda{}", e.lambda), e.value, exact, tol));
        }
    }
    out.table("laplace", table);
    Ok(())
}

pub(super) fn two_sim_agreement(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let levels = spec.list("levels")?;
    let alpha = spec.positive("tol.alpha")?;
    let ladders = ladders(spec, &levels, out)?;
    let paths = csbp_samples(spec, &levels, spec.count("replicates")?)?;
    let mut ks = Table::new(&["level", "statistic", "p_value", "particle_samples", "csbp_samples"]);
    for (k, &r) in levels.iter().enumerate() {
        let a: Vec<f64> = ladders.iter().map(|l| l.1.exit_mass(k)).collect();
        let b: Vec<f64> = paths.iter().map(|p| p[k]).collect();
        let res = ks_two_sample(&a, &b)?;
        ks.push(vec![
            fmt_f64(r),
            fmt_f64(res.statistic),
            fmt_f64(res.p_value),
            a.len().to_string(),
            b.len().to_string(),
        ]);
        out.verdict(Verdict::at_least(format!("ks_p_value_r{r}"), res.p_value, alpha));
    }
    let mut samples = Table::new(&["source", "replicate", "level", "value"]);
    for (i, l) in &ladders {
        for (k, &r) in levels.iter().enumerate() {
            samples.push(vec!["particle".into(), i.to_string(), fmt_f64(r), fmt_f64(l.exit_mass(k))]);
        }
    }
    for (i, p) in paths.iter().enumerate() {
        for (k, &r) in levels.iter().enumerate() {
            samples.push(vec!["csbp".into(), i.to_string(), fmt_f64(r), fmt_f64(p[k])]);
        }
    }
    out.table("ks", ks);
    out.table("samples", samples);
    Ok(())
}

pub(super) fn pde(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let lambda = spec.positive("lambda")?;
    let r = spec.f64("r")?;
    let x_min = spec.f64("x_min")?;
    let solver_tol = spec.positive("solver_tol")?;
    let start = Instant::now();
    let sol = solve_exit_pde(lambda, r, x_min, solver_tol)?;
    let elapsed = start.elapsed().as_secs_f64();
    let c = (6.0 / lambda).sqrt();
    let mut table = Table::new(&["x", "u", "exact", "error"]);
    table.meta("lambda", fmt_f64(lambda));
    table.meta("r", fmt_f64(r));
    let mut sup = 0.0f64;
    for (&x, &u) in sol.x.iter().zip(&sol.u) {
        let exact = 6.0 / (r - x + c).powi(2);
        let err = (u - exact).abs();
        sup = sup.max(err);
        table.push_floats(&[x, u, exact, err]);
    }
    out.table("solution", table);
    out.verdict(Verdict::at_most("sup_error", sup, spec.positive("tol.sup")?));
    out.verdict(Verdict::at_most("runtime_s", elapsed, spec.positive("tol.runtime")?));
    Ok(())
}
