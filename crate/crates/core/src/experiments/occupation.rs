//! Local-time estimates from time-stepped and event-driven runs.

use super::{collect_until, mean_se, replicate_map, Attempt, ExperimentSpec, Outputs};
use crate::engine::exact::{self, LeapPolicy, OccupationParams};
use crate::engine::{run_until_extinction, SimConfig, Trajectory};
use crate::error::Result;
use crate::grid::Grid;
use crate::localtime::{
    accumulate_until, detect_boundary, has_interior_gap, mean_local_time_oracle, occupation_total, qvar_consistency,
    tanaka_residual, LocalTimeProfile,
};
use crate::rng::{self, tag};
use crate::table::{fmt_f64, Table};
use crate::verdict::Verdict;

/// Stepped runs from unit mass at 0, stopped at `t`, with the trajectory
/// grid equal to the profile bins.
fn stepped(spec: &ExperimentSpec) -> Result<(SimConfig, u64, f64)> {
    let t = spec.positive("t")?;
    let config = SimConfig {
        dt: spec.positive("dt")?,
        t_max: t,
        grid_width: spec.positive("bin_width")?,
        seed: spec.seed()?,
        ..SimConfig::new(spec.count("particles")?)
    };
    config.validate()?;
    Ok((config, spec.count("replicates")?, t))
}

fn run_profiles<T: Send>(
    config: &SimConfig,
    reps: u64,
    t: f64,
    f: impl Fn(&Trajectory, &LocalTimeProfile) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    replicate_map(reps, |i| {
        let traj = run_until_extinction(&config.with_replicate(i))?;
        let profile = accumulate_until(&traj, config.grid_width, t)?;
        f(&traj, &profile)
    })
    .into_iter()
    .collect()
}

pub(super) fn mean_localtime(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let (config, reps, t) = stepped(spec)?;
    let xs = spec.list("x")?;
    let (tol_rel, tol_z) = (spec.positive("tol.rel")?, spec.positive("tol.z")?);
    let values = run_profiles(&config, reps, t, |_, p| Ok(xs.iter().map(|&x| p.value_at(x)).collect::<Vec<f64>>()))?;
    let mut table = Table::new(&["x", "mean", "stderr", "oracle"]);
    table.meta("N", config.density.to_string());
    table.meta("dt", fmt_f64(config.dt));
    table.meta("h", fmt_f64(config.grid_width));
    table.meta("t", fmt_f64(t));
    for (j, &x) in xs.iter().enumerate() {
        let column: Vec<f64> = values.iter().map(|v| v[j]).collect();
        let (mean, se) = mean_se(&column);
        let q = mean_local_time_oracle(t, x)?;
        table.push_floats(&[x, mean, se, q]);
        out.verdict(Verdict::within(
            format!("mean_local_time_x{x}"),
            mean,
            q,
            (tol_z * se).max(tol_rel * q),
        ));
    }
    out.table("profile", table);
    Ok(())
}

pub(super) fn tanaka(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let (config, reps, t) = stepped(spec)?;
    let x = spec.f64("x")?;
    let (tol_m2, tol_z) = (spec.positive("tol.second_moment")?, spec.positive("tol.z")?);
    let m = run_profiles(&config, reps, t, |traj, p| tanaka_residual(traj, p, x, t))?;
    let mut per = Table::new(&["replicate", "residual"]);
    for (i, v) in m.iter().enumerate() {
        per.push(vec![i.to_string(), fmt_f64(*v)]);
    }
    let (mean, se) = mean_se(&m);
    let sq: Vec<f64> = m.iter().map(|v| v * v).collect();
    let (m2, m2_se) = mean_se(&sq);
    let target = 0.5 * t * t + x * x * t;
    let mut moments = Table::new(&["x", "t", "mean", "stderr", "second_moment", "second_moment_stderr", "second_moment_target"]);
    moments.meta("N", config.density.to_string());
    moments.meta("dt", fmt_f64(config.dt));
    moments.meta("h", fmt_f64(config.grid_width));
    moments.push_floats(&[x, t, mean, se, m2, m2_se, target]);
    out.table("moments", moments);
    out.table("replicates", per);
    out.verdict(Verdict::within("martingale_mean", mean, 0.0, tol_z * se));
    out.verdict(Verdict::within("martingale_second_moment", m2, target, tol_m2 * target));
    Ok(())
}

pub(super) fn qvar(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let (config, reps, t) = stepped(spec)?;
    let (a, b) = spec.range("interval")?;
    let tol = spec.positive("tol.residual")?;
    let rows = run_profiles(&config, reps, t, |traj, p| {
        let interval = qvar_consistency(traj, p, a, b, t)?;
        let total = occupation_total(traj, t);
        let whole = (p.integral() - total).abs() / total.max(f64::MIN_POSITIVE);
        Ok((interval, whole))
    })?;
    let mut table = Table::new(&["replicate", "interval_residual", "total_residual"]);
    table.meta("interval", format!("{},{}", fmt_f64(a), fmt_f64(b)));
    let mut worst = 0.0f64;
    for (i, &(r1, r2)) in rows.iter().enumerate() {
        table.push(vec![i.to_string(), fmt_f64(r1), fmt_f64(r2)]);
        worst = worst.max(r1).max(r2);
    }
    out.table("residuals", table);
    out.verdict(Verdict::at_most("max_relative_residual", worst, tol));
    Ok(())
}

/// Full occupation profiles of runs extinct by `t_max`.
pub(super) fn range_interval(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let seed = spec.seed()?;
    let n = spec.count("particles")?;
    let h = spec.positive("bin_width")?;
    let needed = spec.count("replicates")?;
    let attempts = needed.saturating_mul(spec.count("max_attempts")?);
    let tol = spec.f64("tol.fraction")?;
    let params = OccupationParams {
        density: n,
        t_max: spec.positive("t_max")?,
        sample_dt: spec.positive("dt")?,
        grid: Grid::centered(h),
        right_window: None,
        leap: LeapPolicy::never(),
        abandon_survivors: true,
    };
    let c = collect_until(needed, attempts, |i| {
        let mut rng = rng::stream(seed, tag::PROFILE, i);
        let run = exact::run_occupation(0.0, n, &params, &mut rng);
        if !run.extinct {
            return Attempt::Discard("not_extinct");
        }
        let p = LocalTimeProfile::from_counts(&run.counts, params.grid, n, params.sample_dt, params.t_max, run.valid_from);
        let thr = p.default_threshold();
        match (detect_boundary(&p, thr), has_interior_gap(&p, thr)) {
            (Ok(b), Ok(gap)) => Attempt::Keep((b.left, b.right, gap)),
            _ => Attempt::Discard("no_support"),
        }
    });
    c.record(out);
    let mut table = Table::new(&["replicate", "left", "right", "gap"]);
    table.meta("N", n.to_string());
    table.meta("h", fmt_f64(h));
    table.meta("dt", fmt_f64(params.sample_dt));
    for &(i, (l, r, gap)) in &c.kept {
        table.push(vec![i.to_string(), fmt_f64(l), fmt_f64(r), (gap as u8).to_string()]);
    }
    out.table("replicates", table);
    let kept = c.kept.len() as u64;
    let gaps = c.kept.iter().filter(|k| k.1 .2).count() as f64;
    let name = "interior_gap_fraction";
    if kept < needed {
        out.verdict(Verdict::indeterminate(name, tol, 0.0, crate::verdict::Rule::AtMost));
    } else {
        out.verdict(Verdict::at_most(name, gaps / kept as f64, tol));
    }
    Ok(())
}
