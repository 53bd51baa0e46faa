//! The exit mass as a function of the level, simulated directly.
//!
//! `Y_r` is a continuous-state branching process with mechanism
//! `ψ(u) = √(2/3)·u^{3/2}`. The mechanism follows from the Laplace transform
//! `E exp(−λY_r) = exp(−y₀·u_r(λ))`, `u_r(λ) = 6(r + √(6/λ))^{−2}`: the
//! branching property forces `∂_r u = −ψ(u)` with `u_0 = λ`, and
//! `∂_r u = −12(r + c)^{−3} = −√(2/3)·(6(r + c)^{−2})^{3/2}`.
//!
//! Paths use the Lamperti time change `Y_r = Z(∫₀^r Y_s ds)` where `Z` is the
//! spectrally positive 3/2-stable Lévy process with `E e^{−λZ_t} = e^{tψ(λ)}`.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::table::{fmt_f64, Table};

/// Stability index.
pub const ALPHA: f64 = 1.5;

/// `√(2/3)`, the coefficient of the branching mechanism.
pub const PSI_COEFF: f64 = 0.816_496_580_927_726;

// Chambers–Mallows–Stuck constants for α = 3/2 and skew +1:
// `B = atan(tan(πα/2))/α = −π/6`, `S = (1 + tan²(πα/2))^{1/(2α)} = 2^{1/3}`.
const CMS_SHIFT: f64 = -PI / 6.0;
const CMS_SCALE: f64 = 1.259_921_049_894_873_2;

/// `3^{−1/3}`. A standard skewed stable variable `X` has
/// `log E e^{−λX} = λ^{3/2}/|cos(3π/4)| = √2·λ^{3/2}`, so `σX` has exponent
/// `√2·σ^{3/2}·λ^{3/2}`. Matching `t·ψ(λ)` gives `σ = (t/√3)^{2/3}`.
const SCALE_PER_TIME: f64 = 0.693_361_274_350_634_7;

/// Branching mechanism `ψ(u) = √(2/3)·u^{3/2}`.
pub fn psi(u: f64) -> f64 {
    PSI_COEFF * u * u.sqrt()
}

/// `u_r(λ) = 6(r + √(6/λ))^{−2}`, the Laplace exponent of `Y_r` per unit of
/// initial mass. `λ = ∞` gives `6/r²`.
pub fn laplace_exponent(r: f64, lambda: f64) -> f64 {
    if r == 0.0 {
        return lambda;
    }
    let c = if lambda.is_infinite() {
        0.0
    } else {
        (6.0 / lambda).sqrt()
    };
    6.0 / (r + c).powi(2)
}

/// `E exp(−λY_r)` for `Y_0 = y₀`. At `λ = ∞` this is `P(Y_r = 0)`.
pub fn laplace_exact(y0: f64, r: f64, lambda: f64) -> f64 {
    if y0 == 0.0 {
        return 1.0;
    }
    if r == 0.0 && lambda.is_infinite() {
        return 0.0;
    }
    (-y0 * laplace_exponent(r, lambda)).exp()
}

/// One increment of the driving Lévy process over time `dt`.
pub fn stable_increment<R: Rng + ?Sized>(dt: f64, rng: &mut R) -> Result<f64> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::config(format!("stable increment needs dt > 0, got {dt}")));
    }
    Ok(stable_increment_unchecked(dt, rng))
}

fn stable_increment_unchecked<R: Rng + ?Sized>(dt: f64, rng: &mut R) -> f64 {
    // σ·X with σ = 3^{−1/3}·t^{2/3} and the α = 3/2 powers folded into one cube root.
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp1.sample(rng);
    let a = ALPHA * (v + CMS_SHIFT);
    let c = v.cos();
    SCALE_PER_TIME * CMS_SCALE * a.sin() * (dt * dt * w / (c * c * (v - a).cos())).cbrt()
}

/// Standard skewed 3/2-stable draw by the Chambers–Mallows–Stuck method.
#[cfg(test)]
fn standard_stable<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp1.sample(rng);
    let a = ALPHA * (v + CMS_SHIFT);
    CMS_SCALE * a.sin() / v.cos().powf(1.0 / ALPHA)
        * ((v - a).cos() / w).powf((1.0 - ALPHA) / ALPHA)
}

/// A level below which none of `samples` increments over `dt` should fall,
/// except with probability `delta`.
///
/// All jumps are upward, so only the compensating drift pushes an increment
/// down. The Chernoff bound `P(Z_t < −x) ≤ min_λ exp(tψ(λ) − λx)` evaluates to
/// `exp(−2x³/(9t²))`; a union bound over the samples gives the threshold.
pub fn lower_tail_bound(dt: f64, samples: u64, delta: f64) -> f64 {
    -(4.5 * dt * dt * (samples as f64 / delta).ln()).cbrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsbpPath {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    /// First grid level at which the path reached zero.
    pub absorbed_at: Option<f64>,
}

impl CsbpPath {
    pub fn step(&self) -> f64 {
        if self.levels.len() < 2 {
            0.0
        } else {
            self.levels[1] - self.levels[0]
        }
    }

    /// Value at the grid level nearest to `r`.
    pub fn value_at(&self, r: f64) -> f64 {
        let h = self.step();
        if h == 0.0 {
            return self.values[0];
        }
        let k = (r / h).round().clamp(0.0, (self.values.len() - 1) as f64) as usize;
        self.values[k]
    }

    pub fn to_table(&self, seed: u64) -> Table {
        let mut t = Table::new(&["r", "Y"]);
        t.meta("dr", fmt_f64(self.step()));
        t.meta("seed", seed.to_string());
        for (r, y) in self.levels.iter().zip(&self.values) {
            t.push_floats(&[*r, *y]);
        }
        t
    }

    pub fn write_csv<W: Write>(&self, seed: u64, out: W) -> std::io::Result<()> {
        self.to_table(seed).write(out)
    }
}

/// Default level step for a horizon.
pub fn default_step(horizon: f64) -> f64 {
    1e-3 * horizon
}

/// Euler scheme for the Lamperti time change on `[0, horizon]`. The step is
/// adjusted down so the grid ends exactly at `horizon`.
pub fn simulate_csbp<R: Rng + ?Sized>(y0: f64, horizon: f64, dr: f64, rng: &mut R) -> Result<CsbpPath> {
    if !(y0 >= 0.0) || !y0.is_finite() {
        return Err(Error::config(format!("initial mass must be non-negative, got {y0}")));
    }
    if !(horizon > 0.0 && dr > 0.0) || !horizon.is_finite() {
        return Err(Error::config(format!(
            "need horizon > 0 and dr > 0, got {horizon} and {dr}"
        )));
    }
    let n = (horizon / dr).ceil().max(1.0) as usize;
    let h = horizon / n as f64;
    let mut levels = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut y = y0;
    let mut absorbed_at = (y0 == 0.0).then_some(0.0);
    levels.push(0.0);
    values.push(y);
    for k in 1..=n {
        levels.push(k as f64 * h);
        if y > 0.0 {
            y += stable_increment_unchecked(y * h, rng);
            if y <= 0.0 {
                y = 0.0;
                absorbed_at = Some(k as f64 * h);
            }
        }
        values.push(y);
    }
    Ok(CsbpPath {
        levels,
        values,
        absorbed_at,
    })
}

/// `Y` at each of `targets` on one simulated path.
pub fn sample_levels<R: Rng + ?Sized>(
    y0: f64,
    horizon: f64,
    dr: f64,
    targets: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let path = simulate_csbp(y0, horizon, dr, rng)?;
    Ok(targets.iter().map(|&r| path.value_at(r)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: f64,
    pub boundary: f64,
    /// `|U(r) − λ|` at the accepted shooting slope.
    pub residual: f64,
    /// The accepted `U'(x_min)`.
    pub slope: f64,
}

impl PdeSolution {
    /// Linear interpolation of `U`.
    pub fn value_at(&self, x: f64) -> f64 {
        let i = self.x.partition_point(|&p| p <= x);
        if i == 0 {
            return self.u[0];
        }
        if i == self.x.len() {
            return *self.u.last().unwrap();
        }
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let w = (x - x0) / (x1 - x0);
        self.u[i - 1] * (1.0 - w) + self.u[i] * w
    }
}

/// Solves `U'' = U²` on `(x_min, r)` with `U(r) = λ` and
/// `U(x_min) = 6(r − x_min + √(6/λ))^{−2}` by shooting on `U'(x_min)`.
///
/// The solution grows like the inverse square of the distance to a point
/// `√(6/λ)` beyond `r`, so RK4 runs on a grid whose spacing is a fixed
/// fraction of that distance.
pub fn solve_exit_pde(lambda: f64, r: f64, x_min: f64, tol: f64) -> Result<PdeSolution> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::config(format!("boundary datum must be positive and finite, got {lambda}")));
    }
    if !(x_min < r) || !(tol > 0.0) {
        return Err(Error::config(format!(
            "need x_min < r and tol > 0, got x_min={x_min}, r={r}, tol={tol}"
        )));
    }
    let c = (6.0 / lambda).sqrt();
    let x = graded_grid(x_min, r, c, tol);
    let u0 = 6.0 / (r - x_min + c).powi(2);
    let end = |s: f64| integrate(&x, u0, s, None);

    let (mut lo, mut hi) = (0.0, 1.0);
    let mut tries = 0;
    while end(lo) > lambda {
        hi = lo;
        lo = -2.0 * lo.abs().max(1.0);
        tries += 1;
        if tries > 200 {
            return Err(Error::ShootingBracket { lo, hi });
        }
    }
    while end(hi) < lambda {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::ShootingBracket { lo, hi });
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if end(mid) < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (s, v) = [lo, hi]
        .into_iter()
        .map(|s| (s, end(s)))
        .min_by(|a, b| (a.1 - lambda).abs().total_cmp(&(b.1 - lambda).abs()))
        .unwrap();
    let mut u = Vec::with_capacity(x.len());
    integrate(&x, u0, s, Some(&mut u));
    Ok(PdeSolution {
        x,
        u,
        lambda,
        boundary: r,
        residual: (v - lambda).abs(),
        slope: s,
    })
}

fn graded_grid(x_min: f64, r: f64, c: f64, tol: f64) -> Vec<f64> {
    // RK4 on a step that is a fraction ε of the scale has relative error
    // about ε⁴ per unit log-distance.
    let eps = (tol.powf(0.25) * 0.5).clamp(1e-4, 0.02);
    let d0 = r - x_min + c;
    let n = ((d0 / c).ln() / eps).ceil().max(16.0) as usize;
    let ratio = (c / d0).powf(1.0 / n as f64);
    let mut x = Vec::with_capacity(n + 1);
    let mut d = d0;
    for _ in 0..n {
        x.push(r + c - d);
        d *= ratio;
    }
    x.push(r);
    x
}

/// RK4 for `(U, U')` along `x`. Returns `U` at the last node, or `∞` once the
/// solution has clearly blown up.
fn integrate(x: &[f64], u0: f64, slope: f64, mut out: Option<&mut Vec<f64>>) -> f64 {
    let (mut u, mut p) = (u0, slope);
    if let Some(o) = out.as_deref_mut() {
        o.push(u);
    }
    for w in x.windows(2) {
        let h = w[1] - w[0];
        let k1 = (p, u * u);
        let (u2, p2) = (u + 0.5 * h * k1.0, p + 0.5 * h * k1.1);
        let k2 = (p2, u2 * u2);
        let (u3, p3) = (u + 0.5 * h * k2.0, p + 0.5 * h * k2.1);
        let k3 = (p3, u3 * u3);
        let (u4, p4) = (u + h * k3.0, p + h * k3.1);
        let k4 = (p4, u4 * u4);
        u += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        p += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if !u.is_finite() || u.abs() > 1e300 {
            if out.is_none() {
                return f64::INFINITY;
            }
            u = f64::INFINITY;
        }
        if let Some(o) = out.as_deref_mut() {
            o.push(u);
        }
    }
    u
}

#[cfg(test)]
mod tests;
