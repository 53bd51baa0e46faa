//! Single-ancestor clusters.
//!
//! The canonical cluster measure is approximated by `N` times the law of a
//! system started from one particle of mass `1/N`. Conditioning is done by
//! rejection: attempt `j` of replicate `i` draws from stream `i` of a family
//! keyed by `j`, so every accepted sample can be regenerated from its indices.

use rayon::prelude::*;

use crate::engine::exact::{self, ExitParams, LeapPolicy, OccupationParams};
use crate::engine::MassChain;
use crate::error::{Error, Result};
use crate::localtime::{detect_boundary, LocalTimeProfile};
use crate::rng::{self, tag};
use crate::stats::{clopper_pearson, normal_quantile};
use crate::table::{fmt_f64, Table};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conditioning {
    None,
    /// Some descendant reaches the level.
    ReachesLevel(f64),
    /// The family is alive at this time.
    SurvivesTo(f64),
}

/// `N·P(event)` with a two-sided 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub r: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicates: u64,
    pub accepts: u64,
    /// Replicates still alive at the horizon without an event.
    pub unsettled: u64,
    /// No successes: the interval is the exact one-sided bound.
    pub degenerate: bool,
}

impl TailEstimate {
    fn from_counts(r: f64, density: u64, accepts: u64, replicates: u64, unsettled: u64) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let n = replicates as f64;
        let p = accepts as f64 / n;
        let scale = density as f64;
        let (lo, hi, degenerate) = if accepts == 0 {
            let (lo, hi) = clopper_pearson(0, replicates, 0.95)?;
            (lo, hi, true)
        } else {
            let half = normal_quantile(0.975) * (p * (1.0 - p) / n).sqrt();
            ((p - half).max(0.0), p + half, false)
        };
        Ok(Self {
            r,
            estimate: scale * p,
            ci_low: scale * lo,
            ci_high: scale * hi,
            replicates,
            accepts,
            unsettled,
            degenerate,
        })
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }
}

/// Tail-estimate CSV: one row per level.
pub fn tail_table(rows: &[TailEstimate]) -> Table {
    let mut t = Table::new(&["r", "estimate", "ci_low", "ci_high", "replicates", "accepts"]);
    for e in rows {
        t.push(vec![
            fmt_f64(e.r),
            fmt_f64(e.estimate),
            fmt_f64(e.ci_low),
            fmt_f64(e.ci_high),
            e.replicates.to_string(),
            e.accepts.to_string(),
        ]);
    }
    t
}

/// `N·P(one ancestor at 0 has a descendant reaching r)`.
pub fn cluster_tail(density: u64, r: f64, replicates: u64, seed: u64, t_max: f64, leap: LeapPolicy) -> Result<TailEstimate> {
    if !(r > 0.0) {
        return Err(Error::config(format!("level must be positive, got {r}")));
    }
    let params = ExitParams {
        density,
        level: r,
        t_max,
        leap,
        stop_at_first: true,
    };
    let outcomes: Vec<(bool, bool)> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, tag::CLUSTER, i);
            let o = exact::run_exit(0.0, 1, &params, &mut rng);
            (o.frozen > 0, o.frozen == 0 && !o.settled)
        })
        .collect();
    let accepts = outcomes.iter().filter(|o| o.0).count() as u64;
    let unsettled = outcomes.iter().filter(|o| o.1).count() as u64;
    TailEstimate::from_counts(r, density, accepts, replicates, unsettled)
}

/// `N·P(one ancestor's family is alive at eps)`, from the exact count chain.
pub fn cluster_survival(density: u64, eps: f64, replicates: u64, seed: u64) -> Result<TailEstimate> {
    if !(eps > 0.0) {
        return Err(Error::config(format!("survival time must be positive, got {eps}")));
    }
    let accepts = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, tag::CLUSTER, i);
            let mut chain = MassChain::new(density, 1);
            chain.advance(eps, &mut rng);
            !chain.is_extinct() as u64
        })
        .sum::<u64>();
    TailEstimate::from_counts(eps, density, accepts, replicates, 0)
}

/// Full-process `P̂(R̂ > r)` against `1 − exp(−N·P̂_cluster(R̂ > r))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpositionRow {
    pub r: f64,
    pub full: f64,
    pub full_stderr: f64,
    pub predicted: f64,
    pub predicted_low: f64,
    pub predicted_high: f64,
}

impl SuperpositionRow {
    pub fn deviation(&self) -> f64 {
        self.full - self.predicted
    }
}

/// Pairs full-process exceedance counts `(r, exceed, replicates)` with the
/// cluster tail at the same level.
pub fn superposition_check(full: &[(f64, u64, u64)], tails: &[TailEstimate]) -> Result<Vec<SuperpositionRow>> {
    full.iter()
        .map(|&(r, exceed, n)| {
            let tail = tails
                .iter()
                .find(|t| (t.r - r).abs() <= 1e-12 * r.abs().max(1.0))
                .ok_or_else(|| Error::config(format!("no cluster tail at level {r}")))?;
            if n == 0 {
                return Err(Error::InsufficientData { needed: 1, got: 0 });
            }
            let p = exceed as f64 / n as f64;
            Ok(SuperpositionRow {
                r,
                full: p,
                full_stderr: (p * (1.0 - p) / n as f64).sqrt(),
                predicted: -(-tail.estimate).exp_m1(),
                predicted_low: -(-tail.ci_low).exp_m1(),
                predicted_high: -(-tail.ci_high).exp_m1(),
            })
        })
        .collect()
}

pub fn superposition_table(rows: &[SuperpositionRow]) -> Table {
    let mut t = Table::new(&["r", "full", "full_stderr", "predicted", "predicted_low", "predicted_high"]);
    for row in rows {
        t.push_floats(&[row.r, row.full, row.full_stderr, row.predicted, row.predicted_low, row.predicted_high]);
    }
    t
}

/// One accepted single-ancestor run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub replicate: u64,
    /// Attempts used, including the accepted one.
    pub attempts: u64,
    pub r_hat: f64,
    pub extinction_time: f64,
    pub profile: LocalTimeProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSample {
    pub density: u64,
    pub conditioning: Conditioning,
    pub outcomes: Vec<ClusterOutcome>,
    /// Replicates that exhausted their attempts.
    pub exhausted: u64,
}

/// Occupation profiles of single-ancestor systems, each redrawn until it
/// satisfies `conditioning` or `max_attempts` is used up. The right window in
/// `params` is honoured, so profiles may be left-censored.
pub fn sample_clusters(
    params: &OccupationParams,
    conditioning: Conditioning,
    replicates: u64,
    max_attempts: u64,
    seed: u64,
) -> Result<ClusterSample> {
    if let Conditioning::ReachesLevel(r) | Conditioning::SurvivesTo(r) = conditioning {
        if !(r > 0.0) {
            return Err(Error::config(format!("conditioning parameter must be positive, got {r}")));
        }
    }
    let results: Vec<Option<ClusterOutcome>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            for j in 0..max_attempts {
                let mut rng = rng::stream(rng::derive_seed(seed, j), tag::CLUSTER, i);
                let run = exact::run_occupation(0.0, 1, params, &mut rng);
                let ok = match conditioning {
                    Conditioning::None => true,
                    Conditioning::ReachesLevel(r) => run.max_sample > r,
                    Conditioning::SurvivesTo(eps) => run.extinction_time > eps,
                };
                if !ok || !run.extinct {
                    continue;
                }
                let profile = LocalTimeProfile::from_counts(
                    &run.counts,
                    params.grid,
                    params.density,
                    params.sample_dt,
                    params.t_max,
                    run.valid_from,
                );
                let r_hat = detect_boundary(&profile, profile.default_threshold())
                    .map(|b| b.right)
                    .unwrap_or(0.0);
                return Some(ClusterOutcome {
                    replicate: i,
                    attempts: j + 1,
                    r_hat,
                    extinction_time: run.extinction_time,
                    profile,
                });
            }
            None
        })
        .collect();
    let exhausted = results.iter().filter(|r| r.is_none()).count() as u64;
    Ok(ClusterSample {
        density: params.density,
        conditioning,
        outcomes: results.into_iter().flatten().collect(),
        exhausted,
    })
}
