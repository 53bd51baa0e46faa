//! Regularity of local time at the right edge of the range.

use super::{collect_until, mean_se, Attempt, Collected, ExperimentSpec, Outputs};
use crate::engine::exact::{self, OccupationParams};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::localtime::{detect_boundary, LocalTimeProfile};
use crate::regularity::{
    derivative_boundary_decay, dyadic_oscillation, envelope_check, fit_exponent, Envelope, FitWindow,
};
use crate::rng::{self, tag};
use crate::table::{fmt_f64, Table};
use crate::verdict::{Rule, Verdict};

/// Resolution of one family of profile runs.
#[derive(Debug, Clone, Copy)]
struct Resolution {
    density: u64,
    h: f64,
    dt: f64,
    window: f64,
}

impl Resolution {
    fn read(spec: &ExperimentSpec, prefix: &str) -> Result<Self> {
        let key = |k: &str| format!("{prefix}{k}");
        Ok(Self {
            density: spec.count(&key("particles"))?,
            h: spec.positive(&key("bin_width"))?,
            dt: spec.positive(&key("dt"))?,
            window: spec.positive(&key("right_window"))?,
        })
    }
}

/// Right-window occupation profiles of extinct runs, with their `R̂`.
/// Replicates for which `f` fails are discarded under `fail_reason`.
fn edge_profiles<T: Send>(
    spec: &ExperimentSpec,
    res: Resolution,
    seed: u64,
    fail_reason: &'static str,
    f: impl Fn(&LocalTimeProfile, f64) -> Result<T> + Sync + Send,
) -> Result<Collected<T>> {
    let params = OccupationParams {
        density: res.density,
        t_max: spec.positive("t_max")?,
        sample_dt: res.dt,
        grid: Grid::centered(res.h),
        right_window: Some(res.window),
        leap: spec.leap()?,
        abandon_survivors: true,
    };
    let needed = spec.count("replicates")?;
    let attempts = needed.saturating_mul(spec.count("max_attempts")?);
    Ok(collect_until(needed, attempts, |i| {
        let mut rng = rng::stream(seed, tag::PROFILE, i);
        let run = exact::run_occupation(0.0, res.density, &params, &mut rng);
        if !run.extinct {
            return Attempt::Discard("not_extinct");
        }
        let p = LocalTimeProfile::from_counts(&run.counts, params.grid, res.density, res.dt, params.t_max, run.valid_from);
        let Ok(b) = detect_boundary(&p, p.default_threshold()) else {
            return Attempt::Discard("no_support");
        };
        match f(&p, b.right) {
            Ok(t) => Attempt::Keep(t),
            Err(_) => Attempt::Discard(fail_reason),
        }
    }))
}

/// `(R − x)^γ` on bins of width `h` left of `R = 1`.
fn synthetic(h: f64, gamma: f64) -> LocalTimeProfile {
    let grid = Grid::centered(h);
    let (lo, hi) = (grid.index(-1.0), grid.index(1.0 - 1e-12));
    let values = (lo..=hi).map(|k| (1.0 - grid.center(k)).max(0.0).powf(gamma)).collect();
    LocalTimeProfile {
        grid,
        first: lo,
        values,
        horizon: 1.0,
        density: 1,
        dt: h,
        valid_from: f64::NEG_INFINITY,
    }
}

pub(super) fn exponent(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let seed = spec.seed()?;
    let (d_min, d_max) = spec.range("window")?;
    let window = FitWindow::new(d_min, d_max);
    let (g_lo, g_hi) = spec.range("gamma_range")?;
    let (s_lo, s_hi) = spec.range("derivative_range")?;
    let base = Resolution::read(spec, "")?;
    let trend = spec.bool("trend")?;
    let fine = if trend { Some(Resolution::read(spec, "trend_")?) } else { None };
    let needed = spec.count("replicates")?;

    let synth = fit_exponent(&synthetic(base.h, 3.0), 1.0, window)?;
    out.table("synthetic", synth.to_table());
    out.verdict(Verdict::within("synthetic_slope", synth.slope, 3.0, spec.positive("tol.synthetic")?));

    let mut fits = Table::new(&[
        "setting", "replicate", "r_hat", "slope", "stderr", "derivative_slope", "points_used", "excluded_zeros",
    ]);
    let mut summary = Table::new(&["setting", "N", "h", "dt", "fits", "mean_slope", "stderr", "mean_derivative_slope"]);
    summary.meta("window", format!("{},{}", fmt_f64(d_min), fmt_f64(d_max)));
    let mut means = Vec::new();
    let settings = [("base", Some(base), seed), ("trend", fine, rng::derive_seed(seed, 1))];
    for (name, res, s) in settings {
        let Some(res) = res else { continue };
        let c = edge_profiles(spec, res, s, "fit_failed", |p, r| {
            Ok((r, fit_exponent(p, r, window)?, derivative_boundary_decay(p, r, window)?))
        })?;
        c.record(out);
        for (i, (r, f, d)) in &c.kept {
            fits.push(vec![
                name.into(),
                i.to_string(),
                fmt_f64(*r),
                fmt_f64(f.slope),
                fmt_f64(f.stderr()),
                fmt_f64(d.slope),
                f.points.to_string(),
                f.excluded_zeros.to_string(),
            ]);
        }
        let slopes: Vec<f64> = c.kept.iter().map(|k| k.1 .1.slope).collect();
        let dslopes: Vec<f64> = c.kept.iter().map(|k| k.1 .2.slope).collect();
        let complete = slopes.len() as u64 >= needed;
        let (mean, se) = mean_se(&slopes);
        let (dmean, _) = mean_se(&dslopes);
        summary.push(vec![
            name.into(),
            res.density.to_string(),
            fmt_f64(res.h),
            fmt_f64(res.dt),
            slopes.len().to_string(),
            fmt_f64(mean),
            fmt_f64(se),
            fmt_f64(dmean),
        ]);
        let mid = 0.5 * (g_lo + g_hi);
        let dmid = 0.5 * (s_lo + s_hi);
        if complete {
            out.verdict(Verdict::within(format!("{name}_mean_slope"), mean, mid, 0.5 * (g_hi - g_lo)));
            out.verdict(Verdict::within(format!("{name}_mean_derivative_slope"), dmean, dmid, 0.5 * (s_hi - s_lo)));
        } else {
            out.verdict(Verdict::indeterminate(format!("{name}_mean_slope"), mid, 0.5 * (g_hi - g_lo), Rule::Within));
            out.verdict(Verdict::indeterminate(
                format!("{name}_mean_derivative_slope"),
                dmid,
                0.5 * (s_hi - s_lo),
                Rule::Within,
            ));
        }
        means.push(complete.then_some(mean));
    }
    if trend {
        // positive when the finer setting is closer to 3
        let gain = match (means[0], means[1]) {
            (Some(a), Some(b)) => (a - 3.0).abs() - (b - 3.0).abs(),
            _ => f64::NAN,
        };
        out.verdict(Verdict::above("trend_gain", gain, 0.0));
    }
    out.table("fits", fits);
    out.table("summary", summary);
    Ok(())
}

pub(super) fn oscillation(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let seed = spec.seed()?;
    let res = Resolution::read(spec, "")?;
    let (lo, hi) = spec.range("scales")?;
    if lo < 0.0 || lo.fract() != 0.0 || hi.fract() != 0.0 {
        return Err(Error::config("scales must be non-negative integers"));
    }
    let scales = lo as u32..=hi as u32;
    let floor = spec.f64("floor")?;

    let synth = dyadic_oscillation(&synthetic(res.h, 3.0), 1.0, f64::NEG_INFINITY, scales.clone())?;
    out.table("synthetic", synth.to_table());
    out.verdict(Verdict::at_least("synthetic_xi", synth.xi, spec.positive("tol.synthetic_xi")?));

    let c = edge_profiles(spec, res, seed, "oscillation_failed", |p, r| {
        Ok((r, dyadic_oscillation(p, r, floor, scales.clone())?))
    })?;
    c.record(out);
    let mut rows = Table::new(&["replicate", "scale", "oscillation"]);
    let mut per = Table::new(&["replicate", "r_hat", "xi"]);
    for (i, (r, o)) in &c.kept {
        for &(n, v) in &o.rows {
            rows.push(vec![i.to_string(), n.to_string(), fmt_f64(v)]);
        }
        per.push(vec![i.to_string(), fmt_f64(*r), fmt_f64(o.xi)]);
    }
    let xis: Vec<f64> = c.kept.iter().map(|k| k.1 .1.xi).filter(|x| x.is_finite()).collect();
    let (mean, _) = mean_se(&xis);
    if (c.kept.len() as u64) < spec.count("replicates")? {
        out.verdict(Verdict::indeterminate("mean_xi", 0.0, 0.0, Rule::Above));
    } else {
        out.verdict(Verdict::above("mean_xi", mean, 0.0));
    }
    out.table("rows", rows);
    out.table("replicates", per);
    Ok(())
}

pub(super) fn envelope(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let seed = spec.seed()?;
    let res = Resolution::read(spec, "")?;
    let window = FitWindow::new(2.0 * res.h, spec.positive("d_max")?);
    let (gu, gl) = (spec.positive("gamma_upper")?, spec.positive("gamma_lower")?);
    let tol = spec.f64("tol.fraction")?;
    let c = edge_profiles(spec, res, seed, "envelope_failed", |p, r| {
        Ok((
            r,
            envelope_check(p, r, gu, Envelope::Upper, window)?,
            envelope_check(p, r, gl, Envelope::Lower, window)?,
        ))
    })?;
    c.record(out);
    let mut per = Table::new(&["replicate", "r_hat", "upper_fraction", "lower_fraction"]);
    per.meta("window", format!("{},{}", fmt_f64(window.d_min), fmt_f64(window.d_max)));
    for (i, (r, u, l)) in &c.kept {
        per.push(vec![i.to_string(), fmt_f64(*r), fmt_f64(*u), fmt_f64(*l)]);
    }
    let up: Vec<f64> = c.kept.iter().map(|k| k.1 .1).collect();
    let low: Vec<f64> = c.kept.iter().map(|k| k.1 .2).collect();
    let (mu, _) = mean_se(&up);
    let (ml, _) = mean_se(&low);
    let mut summary = Table::new(&["side", "gamma", "mean_fraction", "replicates"]);
    summary.push(vec!["upper".into(), fmt_f64(gu), fmt_f64(mu), up.len().to_string()]);
    summary.push(vec!["lower".into(), fmt_f64(gl), fmt_f64(ml), low.len().to_string()]);
    if (c.kept.len() as u64) < spec.count("replicates")? {
        out.verdict(Verdict::indeterminate("upper_fraction", tol, 0.0, Rule::AtLeast));
        out.verdict(Verdict::indeterminate("lower_fraction", tol, 0.0, Rule::AtLeast));
    } else {
        out.verdict(Verdict::at_least("upper_fraction", mu, tol));
        out.verdict(Verdict::at_least("lower_fraction", ml, tol));
    }
    out.table("replicates", per);
    out.table("summary", summary);
    Ok(())
}
