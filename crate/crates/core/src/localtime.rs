//! Local time estimation from binned occupation.
//!
//! The estimator is a histogram of the snapshot occupation:
//! `L̂^x = (1/h)·Σ_k dt·X_{k·dt}(bin of x)` over snapshots after time 0.
//! Summing it against `h` returns `dt·Σ_k X_{k·dt}(1)` exactly, which several
//! checks rely on.

use std::io::Write;

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::grid::{BinCounts, Grid};
use crate::table::{fmt_f64, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeProfile {
    pub grid: Grid,
    /// Grid index of `values[0]`.
    pub first: i64,
    pub values: Vec<f64>,
    pub horizon: f64,
    pub density: u64,
    pub dt: f64,
    /// Bins left of this point are missing from `values`; `-∞` when the
    /// profile covers the whole support.
    pub valid_from: f64,
}

impl LocalTimeProfile {
    /// `L̂ = visits·dt/(N·h)` from snapshot visit counts. When `valid_from`
    /// is finite, bins not entirely at or right of it are dropped.
    pub fn from_counts(counts: &BinCounts, grid: Grid, density: u64, dt: f64, horizon: f64, valid_from: f64) -> Self {
        let scale = dt / (density as f64 * grid.width);
        let trimmed = counts.trimmed();
        let mut first = trimmed.first();
        let mut values: Vec<f64> = trimmed.counts().iter().map(|&c| c as f64 * scale).collect();
        if valid_from.is_finite() && !values.is_empty() {
            let k0 = (valid_from - grid.origin) / grid.width;
            let k0 = k0.ceil() as i64;
            let skip = (k0 - first).clamp(0, values.len() as i64) as usize;
            values.drain(..skip);
            first += skip as i64;
        }
        Self {
            grid,
            first,
            values,
            horizon,
            density,
            dt,
            valid_from,
        }
    }

    pub fn zero(grid: Grid, density: u64, dt: f64, horizon: f64) -> Self {
        Self {
            grid,
            first: 0,
            values: Vec::new(),
            horizon,
            density,
            dt,
            valid_from: f64::NEG_INFINITY,
        }
    }

    pub fn width(&self) -> f64 {
        self.grid.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, i: usize) -> i64 {
        self.first + i as i64
    }

    pub fn left(&self, i: usize) -> f64 {
        self.grid.left(self.index_of(i))
    }

    pub fn right(&self, i: usize) -> f64 {
        self.grid.right(self.index_of(i))
    }

    pub fn center(&self, i: usize) -> f64 {
        self.grid.center(self.index_of(i))
    }

    /// `L̂` at `x`, zero outside the stored bins.
    pub fn value_at(&self, x: f64) -> f64 {
        let k = self.grid.index(x) - self.first;
        if k < 0 {
            return 0.0;
        }
        self.values.get(k as usize).copied().unwrap_or(0.0)
    }

    /// `h·Σ L̂`.
    pub fn integral(&self) -> f64 {
        self.grid.width * self.values.iter().sum::<f64>()
    }

    /// Threshold just below one particle visiting a bin at one snapshot.
    pub fn default_threshold(&self) -> f64 {
        self.dt / (2.0 * self.density as f64 * self.grid.width)
    }

    /// `(bin_left, bin_right, value)` rows.
    pub fn to_table(&self, seed: u64) -> Table {
        let mut t = Table::new(&["bin_left", "bin_right", "value"]);
        t.meta("N", self.density.to_string());
        t.meta("dt", fmt_f64(self.dt));
        t.meta("h", fmt_f64(self.grid.width));
        t.meta("t", fmt_f64(self.horizon));
        t.meta("seed", seed.to_string());
        for i in 0..self.len() {
            t.push_floats(&[self.left(i), self.right(i), self.values[i]]);
        }
        t
    }

    pub fn write_csv<W: Write>(&self, seed: u64, out: W) -> std::io::Result<()> {
        self.to_table(seed).write(out)
    }
}

/// Occupation profile of the whole trajectory on bins of width `h`.
pub fn accumulate_occupation(traj: &Trajectory, h: f64) -> Result<LocalTimeProfile> {
    accumulate_until(traj, h, traj.horizon())
}

/// Occupation profile using snapshots in `(0, t]`.
pub fn accumulate_until(traj: &Trajectory, h: f64, t: f64) -> Result<LocalTimeProfile> {
    let m = traj.grid.coarsening_factor(h).ok_or(Error::IncompatibleGrid {
        requested: h,
        grid: traj.grid.width,
    })? as i64;
    let grid = Grid::new(traj.grid.origin, h);
    let last = traj.sample_at(t).unwrap_or(0);
    let mut visits = BinCounts::new();
    for snap in traj.snapshots.iter().take(last + 1).skip(1) {
        for (k, c) in snap.iter() {
            if c > 0 {
                visits.add(k.div_euclid(m), c);
            }
        }
    }
    let horizon = traj.times.get(last).copied().unwrap_or(0.0);
    Ok(LocalTimeProfile::from_counts(
        &visits,
        grid,
        traj.density,
        traj.dt,
        horizon,
        f64::NEG_INFINITY,
    ))
}

/// `∫₀^t X_s(1) ds` as the right-point sum `dt·Σ_k X_{k·dt}(1)`.
pub fn occupation_total(traj: &Trajectory, t: f64) -> f64 {
    let last = traj.sample_at(t).unwrap_or(0);
    let visits: u64 = traj.snapshots.iter().take(last + 1).skip(1).map(|s| s.total()).sum();
    traj.dt * visits as f64 / traj.density as f64
}

/// Mean local time `q_t(x) = ∫₀^t p_s(x) ds` for a unit mass at 0.
///
/// After `s = u²` the integrand `√(2/π)·exp(−x²/(2u²))` is smooth on
/// `[0, √t]`; adaptive Simpson brings the error below `10⁻⁹`.
pub fn mean_local_time_oracle(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::config(format!("oracle needs t > 0, got {t}")));
    }
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let f = |u: f64| {
        if u == 0.0 {
            if x == 0.0 {
                c
            } else {
                0.0
            }
        } else {
            c * (-x * x / (2.0 * u * u)).exp()
        }
    };
    Ok(adaptive_simpson(&f, 0.0, t.sqrt(), 1e-10, 50))
}

pub(crate) fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    // seed with a few panels so narrow features are not skipped
    let panels = 8;
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (l, r) = (a + i as f64 * w, a + (i + 1) as f64 * w);
            let (fl, fmid, fr) = if panels == 1 { (fa, fm, fb) } else { (f(l), f(0.5 * (l + r)), f(r)) };
            recurse(f, l, r, fl, fmid, fr, simpson(fl, fmid, fr, l, r), tol / panels as f64, depth)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEstimate {
    /// Left edge of the leftmost bin above threshold.
    pub left: f64,
    /// Right edge of the rightmost bin above threshold.
    pub right: f64,
    pub threshold: f64,
    /// The profile does not reach the true left end of the support.
    pub left_censored: bool,
}

pub fn detect_boundary(profile: &LocalTimeProfile, threshold: f64) -> Result<BoundaryEstimate> {
    let lo = profile.values.iter().position(|&v| v > threshold);
    let hi = profile.values.iter().rposition(|&v| v > threshold);
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok(BoundaryEstimate {
            left: profile.left(lo),
            right: profile.right(hi),
            threshold,
            left_censored: profile.valid_from.is_finite(),
        }),
        _ => Err(Error::NoSupport { threshold }),
    }
}

/// Whether some bin strictly between the outermost super-threshold bins is
/// at or below the threshold.
pub fn has_interior_gap(profile: &LocalTimeProfile, threshold: f64) -> Result<bool> {
    let lo = profile.values.iter().position(|&v| v > threshold);
    let hi = profile.values.iter().rposition(|&v| v > threshold);
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok(profile.values[lo..=hi].iter().any(|&v| v <= threshold)),
        _ => Err(Error::NoSupport { threshold }),
    }
}

/// `M̂_t(g_x) = X_t(g_x) − X_0(g_x) − L̂_t^x` with `g_x(y) = |y − x|`, the
/// martingale left over by the Tanaka decomposition. `profile` must be
/// accumulated up to `t`.
pub fn tanaka_residual(traj: &Trajectory, profile: &LocalTimeProfile, x: f64, t: f64) -> Result<f64> {
    let k = traj.sample_at(t).ok_or_else(|| Error::config(format!("no sample at or before t = {t}")))?;
    if (profile.horizon - traj.times[k]).abs() > 0.5 * traj.dt {
        return Err(Error::config(format!(
            "profile horizon {} does not match t = {}",
            profile.horizon, traj.times[k]
        )));
    }
    let xt = traj.integrate(k, |y| (y - x).abs());
    let x0 = traj.initial_mass * (traj.initial_position - x).abs();
    Ok(xt - x0 - profile.value_at(x))
}

/// Central differences `(L̂^{x+h} − L̂^{x−h})/(2h)`, one-sided at the ends.
pub fn derivative_profile(profile: &LocalTimeProfile) -> Result<Vec<f64>> {
    derivative(&profile.values, profile.width())
}

pub(crate) fn derivative(v: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    Ok((0..n)
        .map(|i| match i {
            0 => (v[1] - v[0]) / h,
            i if i == n - 1 => (v[n - 1] - v[n - 2]) / h,
            i => (v[i + 1] - v[i - 1]) / (2.0 * h),
        })
        .collect())
}

/// Compares `4·dt·Σ_k X_{k·dt}([x, y])` from the snapshots with
/// `4·h·Σ L̂` over profile bins in `[x, y]`, membership decided by bin
/// centres, and returns `|A − B|/max(A, floor)`.
pub fn qvar_consistency(traj: &Trajectory, profile: &LocalTimeProfile, x: f64, y: f64, t: f64) -> Result<f64> {
    if !(x < y) {
        return Err(Error::config(format!("need x < y, got [{x}, {y}]")));
    }
    let last = traj.sample_at(t).unwrap_or(0);
    let inside = |c: f64| c >= x && c <= y;
    let mut visits = 0u64;
    for snap in traj.snapshots.iter().take(last + 1).skip(1) {
        for (k, c) in snap.iter() {
            if c > 0 && inside(traj.grid.center(k)) {
                visits += c;
            }
        }
    }
    let a = 4.0 * traj.dt * visits as f64 / traj.density as f64;
    let b = 4.0
        * profile.width()
        * (0..profile.len())
            .filter(|&i| inside(profile.center(i)))
            .map(|i| profile.values[i])
            .sum::<f64>();
    Ok((a - b).abs() / a.max(f64::MIN_POSITIVE))
}
