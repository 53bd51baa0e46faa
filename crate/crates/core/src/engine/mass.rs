use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};

use super::OffspringLaw;

/// The particle count of a system, evolved without positions.
///
/// Branching never depends on position, so the count of a free system is a
/// Markov chain in its own right. `step` reproduces one engine step exactly
/// in law and `advance` applies the continuous-time transition over any span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MassChain {
    pub density: u64,
    pub count: u64,
}

impl MassChain {
    pub fn new(density: u64, count: u64) -> Self {
        Self { density, count }
    }

    pub fn mass(&self) -> f64 {
        self.count as f64 / self.density as f64
    }

    pub fn is_extinct(&self) -> bool {
        self.count == 0
    }

    /// One engine step of length `dt` under `law`.
    pub fn step<R: Rng + ?Sized>(&mut self, law: OffspringLaw, dt: f64, rng: &mut R) {
        if self.count == 0 {
            return;
        }
        match law {
            OffspringLaw::Exact => self.advance(dt, rng),
            OffspringLaw::Binary => {
                let p = law.event_probability(self.density as f64 * dt);
                let events = binomial(self.count, p, rng);
                let deaths = binomial(events, 0.5, rng);
                self.count = self.count + events - 2 * deaths;
            }
            OffspringLaw::Disabled => {}
        }
    }

    /// Continuous-time transition over `span`: each particle leaves a
    /// linear-fractional number of descendants.
    pub fn advance<R: Rng + ?Sized>(&mut self, span: f64, rng: &mut R) {
        if self.count == 0 || span <= 0.0 {
            return;
        }
        let rate = 0.5 * self.density as f64 * span;
        let q = rate / (1.0 + rate);
        let survivors = binomial(self.count, 1.0 - q, rng);
        self.count = survivors + negative_binomial(survivors, q, rng);
    }
}

pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if n == 1 {
        return (rng.random::<f64>() < p) as u64;
    }
    if n < 8 {
        return (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Failures before `successes` successes when each trial fails with
/// probability `fail`, via the Poisson–Gamma mixture.
pub(crate) fn negative_binomial<R: Rng + ?Sized>(successes: u64, fail: f64, rng: &mut R) -> u64 {
    if successes == 0 || fail <= 0.0 {
        return 0;
    }
    let scale = fail / (1.0 - fail);
    let lambda = Gamma::new(successes as f64, scale)
        .expect("valid gamma")
        .sample(rng);
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
}
