//! Exit masses through a ladder of increasing levels.
//!
//! Mass frozen at one level is released there one-for-one and run again with
//! absorption at the next level. By the special Markov property this yields
//! `(Y_{r₀}, Y_{r₁}, …)` for one realisation, with no rounding of mass.

use std::io::Write;

use rand::Rng;

use crate::engine::exact::{self, ExitParams, LeapPolicy};
use crate::engine::{run_absorbed_from, Mode, SimConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::table::{fmt_f64, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct ExitLadder {
    pub density: u64,
    pub initial_mass: f64,
    pub initial_position: f64,
    pub levels: Vec<f64>,
    /// Frozen particle count at each level.
    pub counts: Vec<u64>,
    /// Time each stage took to settle, zero for stages that started empty.
    pub settle_times: Vec<f64>,
}

impl ExitLadder {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn exit_mass(&self, k: usize) -> f64 {
        self.counts[k] as f64 / self.density as f64
    }

    pub fn exit_masses(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.exit_mass(k)).collect()
    }

    /// Exit mass at the ladder level equal to `r`.
    pub fn mass_at(&self, r: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|&l| (l - r).abs() <= 1e-12 * r.abs().max(1.0))
            .map(|k| self.exit_mass(k))
    }

    pub fn to_table(&self, seed: u64) -> Table {
        let mut t = Table::new(&["level", "exit_mass", "settle_time"]);
        t.meta("N", self.density.to_string());
        t.meta("y0", fmt_f64(self.initial_mass));
        t.meta("x0", fmt_f64(self.initial_position));
        t.meta("seed", seed.to_string());
        for k in 0..self.len() {
            t.push_floats(&[self.levels[k], self.exit_mass(k), self.settle_times[k]]);
        }
        t
    }

    pub fn write_csv<W: Write>(&self, seed: u64, out: W) -> std::io::Result<()> {
        self.to_table(seed).write(out)
    }
}

fn check_levels(start: f64, levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::config("ladder needs at least one level"));
    }
    if !(levels[0] > start) {
        return Err(Error::config(format!(
            "first level {} must exceed the initial position {start}",
            levels[0]
        )));
    }
    if let Some(w) = levels.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::config(format!("levels must increase: {} then {}", w[0], w[1])));
    }
    Ok(())
}

/// Ladder from the time-stepped engine. Stage 0 is exactly
/// `run_absorbed(config)`; later stages draw from derived seeds.
pub fn exit_ladder(config: &SimConfig, levels: &[f64]) -> Result<ExitLadder> {
    check_levels(config.initial_position, levels)?;
    config.validate()?;
    let mut count = config.initial_count();
    let mut ladder = empty_ladder(config, levels);
    let mut start = config.initial_position;
    for (k, &level) in levels.iter().enumerate() {
        if count > 0 {
            let mut stage = config.clone();
            stage.mode = Mode::Absorbed;
            stage.initial_position = start;
            stage.freeze_level = Some(level);
            if k > 0 {
                stage.seed = rng::derive_seed(config.seed, k as u64);
            }
            let run = run_absorbed_from(&stage, count)?;
            if !run.settled {
                return Err(Error::NotSettled {
                    what: "ladder stage",
                    t_max: config.t_max,
                });
            }
            count = run.frozen_count;
            ladder.settle_times[k] = run.trajectory.horizon();
        }
        ladder.counts[k] = count;
        start = level;
    }
    Ok(ladder)
}

/// Ladder from the event-driven engine, drawing every stage from `rng`.
/// `config.t_max` caps each stage.
pub fn exit_ladder_exact<R: Rng + ?Sized>(
    config: &SimConfig,
    levels: &[f64],
    leap: LeapPolicy,
    rng: &mut R,
) -> Result<ExitLadder> {
    check_levels(config.initial_position, levels)?;
    let mut count = config.initial_count();
    if count == 0 {
        return Err(Error::ZeroParticles {
            mass: config.initial_mass,
            density: config.density,
        });
    }
    let mut ladder = empty_ladder(config, levels);
    let mut start = config.initial_position;
    for (k, &level) in levels.iter().enumerate() {
        if count > 0 {
            let params = ExitParams {
                density: config.density,
                level,
                t_max: config.t_max,
                leap,
                stop_at_first: false,
            };
            let out = exact::run_exit(start, count, &params, rng);
            if !out.settled {
                return Err(Error::NotSettled {
                    what: "ladder stage",
                    t_max: config.t_max,
                });
            }
            count = out.frozen;
            ladder.settle_times[k] = out.settle_time;
        }
        ladder.counts[k] = count;
        start = level;
    }
    Ok(ladder)
}

fn empty_ladder(config: &SimConfig, levels: &[f64]) -> ExitLadder {
    ExitLadder {
        density: config.density,
        initial_mass: config.initial_count() as f64 / config.density as f64,
        initial_position: config.initial_position,
        levels: levels.to_vec(),
        counts: vec![0; levels.len()],
        settle_times: vec![0.0; levels.len()],
    }
}

/// `R_n`: the first ladder level with `Y ≤ 2^{−n}`, or `None` when every
/// level stays above the threshold.
pub fn level_hitting(ladder: &ExitLadder, n: u32) -> Result<Option<f64>> {
    let threshold = 0.5f64.powi(n as i32);
    if threshold < 1.0 / ladder.density as f64 {
        return Err(Error::BelowResolution {
            n,
            density: ladder.density,
        });
    }
    Ok((0..ladder.len())
        .find(|&k| ladder.exit_mass(k) <= threshold)
        .map(|k| ladder.levels[k]))
}

/// Where the exit mass first vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderBoundary {
    /// First level with `Y = 0`.
    pub level: f64,
    /// The previous level, or the initial position.
    pub below: f64,
}

impl LadderBoundary {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.level + self.below)
    }

    pub fn half_gap(&self) -> f64 {
        0.5 * (self.level - self.below)
    }
}

/// `R̂` lies in `(below, level]`.
pub fn boundary_from_ladder(ladder: &ExitLadder) -> Result<LadderBoundary> {
    let k = ladder.counts.iter().position(|&c| c == 0).ok_or(Error::NoZeroLevel)?;
    Ok(LadderBoundary {
        level: ladder.levels[k],
        below: if k == 0 {
            ladder.initial_position
        } else {
            ladder.levels[k - 1]
        },
    })
}

/// `K` geometrically spaced levels from `first` to `last`.
pub fn geometric_levels(first: f64, last: f64, k: usize) -> Result<Vec<f64>> {
    if !(first > 0.0 && last > first) || k < 2 {
        return Err(Error::config(format!(
            "need 0 < first < last and at least two levels, got {first}, {last}, {k}"
        )));
    }
    let ratio = (last / first).powf(1.0 / (k - 1) as f64);
    let mut v: Vec<f64> = (0..k).map(|i| first * ratio.powi(i as i32)).collect();
    v[k - 1] = last;
    Ok(v)
}
