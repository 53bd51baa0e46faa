//! Boundary regularity of local-time profiles.
//!
//! Everything here looks at the right end `R̂` of the support through the
//! distance `d = R̂ − x`. Left ends are handled by [`mirror`]ing the profile.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::localtime::{derivative_profile, LocalTimeProfile};
use crate::stats::{linear_regression, loglog_regression};
use crate::table::{fmt_f64, Table};

/// Target points per octave of distance when fitting.
const POINTS_PER_OCTAVE: f64 = 4.0;

/// Smallest number of points a fit accepts.
pub const MIN_FIT_POINTS: usize = 5;

/// Distances `[d_min, d_max]` from the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub d_min: f64,
    pub d_max: f64,
}

impl FitWindow {
    pub fn new(d_min: f64, d_max: f64) -> Self {
        Self { d_min, d_max }
    }

    fn check(&self, h: f64) -> Result<()> {
        if !(self.d_min >= 2.0 * h * (1.0 - 1e-9)) || !(self.d_max > self.d_min) {
            return Err(Error::config(format!(
                "fit window [{}, {}] must start at 2h = {} or later and be non-empty",
                self.d_min,
                self.d_max,
                2.0 * h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Regression standard error of the slope.
    pub slope_stderr: f64,
    /// Largest slope change when the boundary moves by one bin either way.
    pub boundary_spread: f64,
    pub window: FitWindow,
    pub points: usize,
    pub excluded_zeros: usize,
}

impl ExponentFit {
    /// Regression error plus boundary spread.
    pub fn stderr(&self) -> f64 {
        self.slope_stderr + self.boundary_spread
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["slope", "stderr", "d_min", "d_max", "points_used", "excluded_zeros"]);
        t.push(vec![
            fmt_f64(self.slope),
            fmt_f64(self.stderr()),
            fmt_f64(self.window.d_min),
            fmt_f64(self.window.d_max),
            self.points.to_string(),
            self.excluded_zeros.to_string(),
        ]);
        t
    }
}

/// Reflects a profile through zero, turning its left end into a right end.
pub fn mirror(profile: &LocalTimeProfile) -> LocalTimeProfile {
    let mut values = profile.values.clone();
    values.reverse();
    LocalTimeProfile {
        grid: Grid::new(-profile.grid.origin, profile.grid.width),
        first: -profile.first - profile.len() as i64,
        values,
        horizon: profile.horizon,
        density: profile.density,
        dt: profile.dt,
        valid_from: f64::NEG_INFINITY,
    }
}

/// Bin indices (into `values`) at roughly geometric distances from
/// `boundary`, each snapped to the nearest bin centre inside the window.
fn dyadic_bins(profile: &LocalTimeProfile, boundary: f64, window: FitWindow) -> Vec<usize> {
    let inside = |i: usize| {
        let d = boundary - profile.center(i);
        d >= window.d_min * (1.0 - 1e-12) && d <= window.d_max * (1.0 + 1e-12)
    };
    let candidates: Vec<usize> = (0..profile.len()).filter(|&i| inside(i)).collect();
    if candidates.is_empty() {
        return candidates;
    }
    let octaves = (window.d_max / window.d_min).log2();
    let n = (octaves * POINTS_PER_OCTAVE).ceil().max(1.0) as usize;
    let mut picked: Vec<usize> = (0..=n)
        .map(|k| {
            let target = window.d_min * (window.d_max / window.d_min).powf(k as f64 / n as f64);
            *candidates
                .iter()
                .min_by(|&&a, &&b| {
                    let da = (boundary - profile.center(a) - target).abs();
                    let db = (boundary - profile.center(b) - target).abs();
                    da.total_cmp(&db)
                })
                .unwrap()
        })
        .collect();
    picked.sort_unstable();
    picked.dedup();
    picked
}

fn fit_values(
    profile: &LocalTimeProfile,
    values: &[f64],
    boundary: f64,
    window: FitWindow,
) -> Result<(crate::stats::LineFit, usize)> {
    let bins = dyadic_bins(profile, boundary, window);
    let mut zeros = 0;
    let mut points = Vec::with_capacity(bins.len());
    for i in bins {
        let v = values[i].abs();
        if v > 0.0 {
            points.push((boundary - profile.center(i), v));
        } else {
            zeros += 1;
        }
    }
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_POINTS,
            got: points.len(),
        });
    }
    Ok((loglog_regression(&points)?, zeros))
}

fn fit_with_spread(profile: &LocalTimeProfile, values: &[f64], boundary: f64, window: FitWindow) -> Result<ExponentFit> {
    window.check(profile.width())?;
    let (fit, zeros) = fit_values(profile, values, boundary, window)?;
    let h = profile.width();
    let spread = [boundary - h, boundary + h]
        .into_iter()
        .filter_map(|b| fit_values(profile, values, b, window).ok())
        .map(|(f, _)| (f.slope - fit.slope).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit {
        slope: fit.slope,
        intercept: fit.intercept,
        slope_stderr: fit.slope_stderr,
        boundary_spread: spread,
        window,
        points: fit.points,
        excluded_zeros: zeros,
    })
}

/// Slope of `log L̂^x` against `log(R̂ − x)` over the window.
pub fn fit_exponent(profile: &LocalTimeProfile, boundary: f64, window: FitWindow) -> Result<ExponentFit> {
    fit_with_spread(profile, &profile.values, boundary, window)
}

/// Slope of `log|L̂'(x)|` against `log(R̂ − x)`, using centred differences.
pub fn derivative_boundary_decay(profile: &LocalTimeProfile, boundary: f64, window: FitWindow) -> Result<ExponentFit> {
    let d = derivative_profile(profile)?;
    fit_with_spread(profile, &d, boundary, window)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationTable {
    /// `(N, osc_N)` rows.
    pub rows: Vec<(u32, f64)>,
    /// Slope of `−log₂ osc_N` in `N`; `+∞` when every `osc_N` is zero.
    pub xi: f64,
}

impl OscillationTable {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["scale", "oscillation"]);
        t.meta("xi", fmt_f64(self.xi));
        for &(n, o) in &self.rows {
            t.push(vec![n.to_string(), fmt_f64(o)]);
        }
        t
    }
}

/// `osc_N = max{|L̂^x − L̂^y| : x ∈ Z_N, |y − x| ≤ 2^{−N}}` over bin centres,
/// with `Z_N = [R̂ − 2^{−N}, R̂] ∩ (floor, ∞)`.
pub fn dyadic_oscillation(
    profile: &LocalTimeProfile,
    boundary: f64,
    floor: f64,
    scales: RangeInclusive<u32>,
) -> Result<OscillationTable> {
    let h = profile.width();
    let mut rows = Vec::new();
    for n in scales {
        let delta = 0.5f64.powi(n as i32);
        if delta < 2.0 * h * (1.0 - 1e-9) {
            return Err(Error::config(format!(
                "scale 2^-{n} is below twice the bin width {h}"
            )));
        }
        let zn: Vec<i64> = (profile.grid.index(boundary - delta)..=profile.grid.index(boundary))
            .filter(|&k| {
                let c = profile.grid.center(k);
                c >= boundary - delta && c <= boundary && c > floor
            })
            .collect();
        if zn.is_empty() {
            return Err(Error::EmptyWindow(format!("Z_{n} has no bin centre")));
        }
        let reach = (delta / h + 1e-9).floor() as i64;
        let value = |k: i64| profile.value_at(profile.grid.center(k));
        let mut osc = 0.0f64;
        for &k in &zn {
            let lx = value(k);
            for j in k - reach..=k + reach {
                osc = osc.max((lx - value(j)).abs());
            }
        }
        rows.push((n, osc));
    }
    let positive: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.1 > 0.0)
        .map(|&(n, o)| (n as f64, -o.log2()))
        .collect();
    let xi = match positive.len() {
        0 => f64::INFINITY,
        1 | 2 => {
            return Err(Error::InsufficientData {
                needed: 3,
                got: positive.len(),
            })
        }
        _ => linear_regression(&positive)?.slope,
    };
    Ok(OscillationTable { rows, xi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    /// `L^x ≤ 2^γ (R − x)^γ`.
    Upper,
    /// `L^x ≥ 2^{−γ/2} (R − x)^γ`.
    Lower,
}

impl Envelope {
    pub fn bound(self, gamma: f64, d: f64) -> f64 {
        match self {
            Envelope::Upper => 2f64.powf(gamma) * d.powf(gamma),
            Envelope::Lower => 2f64.powf(-gamma / 2.0) * d.powf(gamma),
        }
    }

    pub fn holds(self, gamma: f64, d: f64, value: f64) -> bool {
        match self {
            Envelope::Upper => value <= self.bound(gamma, d),
            Envelope::Lower => value >= self.bound(gamma, d),
        }
    }
}

/// Fraction of bin centres with `R̂ − x` in the window that satisfy the
/// envelope.
pub fn envelope_check(
    profile: &LocalTimeProfile,
    boundary: f64,
    gamma: f64,
    side: Envelope,
    window: FitWindow,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::config(format!("envelope exponent must be positive, got {gamma}")));
    }
    window.check(profile.width())?;
    let h = profile.width();
    let (lo, hi) = (
        profile.grid.index(boundary - window.d_max),
        profile.grid.index(boundary - window.d_min),
    );
    let mut total = 0usize;
    let mut ok = 0usize;
    for k in lo..=hi {
        let d = boundary - profile.grid.center(k);
        if d < window.d_min * (1.0 - 1e-12) || d > window.d_max * (1.0 + 1e-12) {
            continue;
        }
        total += 1;
        ok += side.holds(gamma, d, profile.value_at(profile.grid.center(k))) as usize;
    }
    if total == 0 {
        return Err(Error::EmptyWindow(format!(
            "no bin of width {h} within [{}, {}] of {boundary}",
            window.d_min, window.d_max
        )));
    }
    Ok(ok as f64 / total as f64)
}

/// `inf L̂` over bins lying inside `(0, r_n)`.
pub fn levelset_infimum(profile: &LocalTimeProfile, r_n: f64) -> Result<f64> {
    let grid = profile.grid;
    let (lo, hi) = (grid.index(0.0), grid.index(r_n));
    (lo..=hi)
        .filter(|&k| grid.left(k) >= 0.0 && grid.right(k) <= r_n)
        .map(|k| profile.value_at(grid.center(k)))
        .reduce(f64::min)
        .ok_or_else(|| Error::EmptyWindow(format!("no bin inside (0, {r_n})")))
}

/// `2^{−nβ}` for the exponents the level-set check reports.
pub fn levelset_thresholds(n: u32) -> [(f64, f64); 2] {
    [1.6, 2.0].map(|beta| (beta, 2f64.powf(-(n as f64) * beta)))
}
