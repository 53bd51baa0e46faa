//! Critical branching Brownian particle systems.
//!
//! Particles carry mass `1/N`, diffuse as standard Brownian motions and
//! branch at rate `N` into zero or two children. As `N` grows the empirical
//! measure converges to super-Brownian motion with unit branching rate.
//!
//! [`ParticleSystem`] is the time-stepped engine. [`MassChain`] is the exact
//! law of its particle count, and [`exact`] holds event-driven simulators of
//! the continuous-time system used where the step engine is too slow.

pub mod exact;
mod mass;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{BinCounts, Grid};
use crate::rng::{self, SimRng};

pub use mass::MassChain;

/// Largest admissible `N·dt`.
pub const MAX_RATE_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Free,
    Absorbed,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Free => "free",
            Mode::Absorbed => "absorbed",
        }
    }
}

/// How a particle's offspring count over one step is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffspringLaw {
    /// The continuous-time family size over `dt`: zero with probability
    /// `q = N·dt/(2 + N·dt)`, otherwise `k ≥ 1` with probability
    /// `(1−q)²q^{k−1}`. Mean one, variance exactly `N·dt`.
    Exact,
    /// With probability `1 − e^{−N·dt}` the particle branches into 0 or 2.
    /// Its variance `1 − e^{−N·dt}` undershoots the branching rate by
    /// about `N·dt/2` relative.
    Binary,
    /// No branching at all; used for pure-diffusion checks.
    Disabled,
}

impl OffspringLaw {
    pub fn as_str(self) -> &'static str {
        match self {
            OffspringLaw::Exact => "exact",
            OffspringLaw::Binary => "binary",
            OffspringLaw::Disabled => "disabled",
        }
    }

    /// Probability that a particle's count changes during one step.
    pub fn event_probability(self, rate_step: f64) -> f64 {
        match self {
            OffspringLaw::Exact => {
                let q = rate_step / (2.0 + rate_step);
                q * (2.0 - q)
            }
            OffspringLaw::Binary => -(-rate_step).exp_m1(),
            OffspringLaw::Disabled => 0.0,
        }
    }

    /// Offspring count given that an event happened.
    fn offspring_given_event<R: Rng + ?Sized>(self, rate_step: f64, rng: &mut R) -> u64 {
        match self {
            OffspringLaw::Exact => {
                let q = rate_step / (2.0 + rate_step);
                if rng.random::<f64>() < 1.0 / (2.0 - q) {
                    0
                } else {
                    2 + geometric_failures(q, rng)
                }
            }
            OffspringLaw::Binary => {
                if rng.random::<bool>() {
                    0
                } else {
                    2
                }
            }
            OffspringLaw::Disabled => 1,
        }
    }
}

/// Number of failures before the first success when each trial fails with
/// probability `fail`.
#[inline]
pub(crate) fn geometric_failures<R: Rng + ?Sized>(fail: f64, rng: &mut R) -> u64 {
    if fail <= 0.0 {
        return 0;
    }
    let u = 1.0 - rng.random::<f64>();
    (u.ln() / fail.ln()).floor() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Particles per unit mass.
    pub density: u64,
    pub initial_mass: f64,
    pub initial_position: f64,
    pub dt: f64,
    pub t_max: f64,
    pub freeze_level: Option<f64>,
    pub seed: u64,
    pub mode: Mode,
    pub offspring: OffspringLaw,
    /// Width of the spatial grid trajectories are binned on.
    pub grid_width: f64,
    /// Stream index; replicate `i` of an experiment uses `replicate = i`.
    pub replicate: u64,
}

impl SimConfig {
    /// Defaults: unit mass at the origin, `N·dt = 0.1`, horizon 10, exact
    /// offspring law and grid width `N^{-1/3}`.
    pub fn new(density: u64) -> Self {
        let n = density.max(1) as f64;
        Self {
            density,
            initial_mass: 1.0,
            initial_position: 0.0,
            dt: MAX_RATE_STEP / n,
            t_max: 10.0,
            freeze_level: None,
            seed: 0,
            mode: Mode::Free,
            offspring: OffspringLaw::Exact,
            grid_width: n.powf(-1.0 / 3.0),
            replicate: 0,
        }
    }

    pub fn absorbed_at(mut self, level: f64) -> Self {
        self.mode = Mode::Absorbed;
        self.freeze_level = Some(level);
        self
    }

    pub fn with_replicate(&self, replicate: u64) -> Self {
        Self {
            replicate,
            ..self.clone()
        }
    }

    pub fn rate_step(&self) -> f64 {
        self.density as f64 * self.dt
    }

    /// `y₀·N` rounded half to even, so half a particle rounds to none.
    pub fn initial_count(&self) -> u64 {
        (self.initial_mass * self.density as f64).round_ties_even().max(0.0) as u64
    }

    pub fn grid(&self) -> Grid {
        Grid::centered(self.grid_width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.density == 0 {
            return Err(Error::config("density must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt must be positive"));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::config("t_max must be positive"));
        }
        if !(self.grid_width > 0.0 && self.grid_width.is_finite()) {
            return Err(Error::config("grid width must be positive"));
        }
        if !(self.initial_mass >= 0.0 && self.initial_position.is_finite()) {
            return Err(Error::config("initial mass and position must be finite"));
        }
        let product = self.rate_step();
        if self.offspring != OffspringLaw::Disabled && product > MAX_RATE_STEP * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { product });
        }
        if self.initial_count() == 0 {
            return Err(Error::ZeroParticles {
                mass: self.initial_mass,
                density: self.density,
            });
        }
        match (self.mode, self.freeze_level) {
            (Mode::Absorbed, None) => Err(Error::config("absorbed mode needs a freeze level")),
            (Mode::Absorbed, Some(r)) if !(r > self.initial_position) => Err(Error::config(
                format!("freeze level {r} must exceed the initial position"),
            )),
            _ => Ok(()),
        }
    }
}

/// Equal-mass particles; only living ones keep a position. Frozen
/// particles all sit on the freeze level, dead ones are just counted.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    config: SimConfig,
    alive: Vec<f64>,
    frozen: u64,
    dead: u64,
    steps: u64,
    rng: SimRng,
    deaths: Vec<usize>,
    births: Vec<f64>,
}

pub fn init_system(config: &SimConfig) -> Result<ParticleSystem> {
    config.validate()?;
    init_with_count(config, config.initial_count())
}

/// Like [`init_system`] but with an explicit particle count, as used when
/// frozen particles are released again.
pub fn init_with_count(config: &SimConfig, count: u64) -> Result<ParticleSystem> {
    let mut c = config.clone();
    c.initial_mass = count as f64 / c.density.max(1) as f64;
    if count > 0 {
        c.validate()?;
    }
    Ok(ParticleSystem {
        alive: vec![c.initial_position; count as usize],
        rng: rng::stream(c.seed, rng::tag::ENGINE, c.replicate),
        config: c,
        frozen: 0,
        dead: 0,
        steps: 0,
        deaths: Vec::new(),
        births: Vec::new(),
    })
}

impl ParticleSystem {
    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn positions(&self) -> &[f64] {
        &self.alive
    }

    pub fn alive_count(&self) -> u64 {
        self.alive.len() as u64
    }

    pub fn frozen_count(&self) -> u64 {
        self.frozen
    }

    pub fn dead_count(&self) -> u64 {
        self.dead
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Mass of living and frozen particles.
    pub fn total_mass(&self) -> f64 {
        (self.alive_count() + self.frozen) as f64 / self.config.density as f64
    }

    pub fn alive_mass(&self) -> f64 {
        self.alive_count() as f64 / self.config.density as f64
    }

    pub fn is_extinct(&self) -> bool {
        self.alive.is_empty()
    }

    /// Counts of living particles per grid bin.
    pub fn binned(&self, grid: &Grid) -> BinCounts {
        bin_positions(grid, &self.alive)
    }

    /// Advances one step: Gaussian displacement, absorption, then branching.
    pub fn step(&mut self) {
        self.steps += 1;
        if self.alive.is_empty() {
            return;
        }
        let dt = self.config.dt;
        let sd = dt.sqrt();
        let rng = &mut self.rng;
        match (self.config.mode, self.config.freeze_level) {
            (Mode::Absorbed, Some(level)) => {
                let mut frozen = 0;
                self.alive.retain_mut(|x| {
                    let a = *x;
                    let z: f64 = StandardNormal.sample(rng);
                    let b = a + sd * z;
                    let hit = b >= level || {
                        let bridge = (-2.0 * (level - a) * (level - b) / dt).exp();
                        rng.random::<f64>() < bridge
                    };
                    *x = b;
                    if hit {
                        frozen += 1;
                    }
                    !hit
                });
                self.frozen += frozen;
            }
            _ => {
                for x in self.alive.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *x += sd * z;
                }
            }
        }
        self.branch();
    }

    fn branch(&mut self) {
        let law = self.config.offspring;
        let rate_step = self.config.rate_step();
        let p = law.event_probability(rate_step);
        if p <= 0.0 || self.alive.is_empty() {
            return;
        }
        let stay = 1.0 - p;
        let n = self.alive.len();
        self.deaths.clear();
        self.births.clear();
        let mut i = geometric_failures(stay, &mut self.rng) as usize;
        while i < n {
            match law.offspring_given_event(rate_step, &mut self.rng) {
                0 => self.deaths.push(i),
                k => {
                    let x = self.alive[i];
                    self.births.extend(std::iter::repeat_n(x, k as usize - 1));
                }
            }
            i = i
                .saturating_add(1)
                .saturating_add(geometric_failures(stay, &mut self.rng) as usize);
        }
        if !self.deaths.is_empty() {
            let mut next = 0;
            let mut w = 0;
            for r in 0..n {
                if next < self.deaths.len() && self.deaths[next] == r {
                    next += 1;
                    continue;
                }
                self.alive[w] = self.alive[r];
                w += 1;
            }
            self.alive.truncate(w);
            self.dead += self.deaths.len() as u64;
        }
        self.alive.extend_from_slice(&self.births);
    }
}

pub(crate) fn bin_positions(grid: &Grid, xs: &[f64]) -> BinCounts {
    if xs.is_empty() {
        return BinCounts::new();
    }
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    for &x in xs {
        let k = grid.index(x);
        lo = lo.min(k);
        hi = hi.max(k);
    }
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &x in xs {
        counts[(grid.index(x) - lo) as usize] += 1;
    }
    BinCounts::from_parts(lo, counts)
}

/// Binned snapshots of one replicate, taken at time 0 and after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub density: u64,
    pub dt: f64,
    pub grid: Grid,
    pub initial_mass: f64,
    pub initial_position: f64,
    pub times: Vec<f64>,
    /// Living-particle counts per bin; mass is count / density.
    pub snapshots: Vec<BinCounts>,
    /// First sample time with no living particle.
    pub extinction_time: Option<f64>,
}

impl Trajectory {
    fn start(system: &ParticleSystem) -> Self {
        let grid = system.config.grid();
        Self {
            density: system.config.density,
            dt: system.config.dt,
            grid,
            initial_mass: system.config.initial_mass,
            initial_position: system.config.initial_position,
            times: vec![0.0],
            snapshots: vec![system.binned(&grid)],
            extinction_time: system.is_extinct().then_some(0.0),
        }
    }

    fn record(&mut self, system: &ParticleSystem) {
        self.times.push(system.time());
        self.snapshots.push(system.binned(&self.grid));
        if system.is_extinct() && self.extinction_time.is_none() {
            self.extinction_time = Some(system.time());
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_count(&self, sample: usize) -> u64 {
        self.snapshots[sample].total()
    }

    pub fn total_mass(&self, sample: usize) -> f64 {
        self.total_count(sample) as f64 / self.density as f64
    }

    /// `X_t(f)` at a sample, evaluating `f` at bin centres.
    pub fn integrate(&self, sample: usize, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.density as f64;
        self.snapshots[sample]
            .iter()
            .filter(|&(_, c)| c > 0)
            .map(|(k, c)| c as f64 / n * f(self.grid.center(k)))
            .sum()
    }

    pub fn is_extinct(&self) -> bool {
        self.extinction_time.is_some()
    }

    /// Index of the last sample taken at or before `t`.
    pub fn sample_at(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s <= t + 1e-9 * self.dt);
        k.checked_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Steps a free system until no particle is alive or `t_max` is reached.
pub fn run_until_extinction(config: &SimConfig) -> Result<Trajectory> {
    if config.mode != Mode::Free {
        return Err(Error::WrongMode { mode: "free" });
    }
    let mut system = init_system(config)?;
    Ok(run_recorded(&mut system))
}

fn run_recorded(system: &mut ParticleSystem) -> Trajectory {
    let mut traj = Trajectory::start(system);
    let n_steps = (system.config.t_max / system.config.dt - 1e-9).ceil() as u64;
    while !system.is_extinct() && system.steps < n_steps {
        system.step();
        traj.record(system);
    }
    traj
}

#[derive(Debug, Clone)]
pub struct AbsorbedRun {
    pub trajectory: Trajectory,
    pub frozen_count: u64,
    /// False when particles were still alive at `t_max`.
    pub settled: bool,
}

impl AbsorbedRun {
    pub fn exit_mass(&self) -> f64 {
        self.frozen_count as f64 / self.trajectory.density as f64
    }
}

/// Steps an absorbed system until every particle is frozen or dead.
pub fn run_absorbed(config: &SimConfig) -> Result<AbsorbedRun> {
    run_absorbed_from(config, config.initial_count())
}

/// [`run_absorbed`] starting from `count` particles at the initial position.
pub fn run_absorbed_from(config: &SimConfig, count: u64) -> Result<AbsorbedRun> {
    if config.mode != Mode::Absorbed {
        return Err(Error::WrongMode { mode: "absorbed" });
    }
    if count > 0 {
        config.validate()?;
    }
    let mut system = init_with_count(config, count)?;
    let trajectory = run_recorded(&mut system);
    Ok(AbsorbedRun {
        trajectory,
        frozen_count: system.frozen,
        settled: system.is_extinct(),
    })
}

#[cfg(test)]
mod tests;
